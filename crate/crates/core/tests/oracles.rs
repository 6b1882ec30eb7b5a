//! Library results against independent references: direct sliding-window
//! layers and nalgebra dense linear algebra.

mod common;

use common::*;
use keynet_core::analysis::{nonneg_split, ssim, SsimParams};
use keynet_core::imageio::natural_image;
use keynet_core::keynet::{assign_keys, build_keynet, decode_output, encode_image, KeyedLayer};
use keynet_core::keys::{gen_key, KeyGenConfig};
use keynet_core::netir::{self, lower_network, zoo, Layer, LayerSpec, LayerWeights, LoweredLayer, PadMode, Shape};
use keynet_core::sensor::{cmos_moments, simulate_cmos_analog, CmosConfig, NoiseMode};
use keynet_core::sparsekit::CooMatrix;
use keynet_core::exec::Exec;
use keynet_core::netir::Tensor3;
use rand::Rng;

#[test]
fn lowered_layers_match_direct_evaluation() {
    let mut r = rng(1);
    for _ in 0..40 {
        let (c, h, w) = (r.random_range(1..4), r.random_range(3..10), r.random_range(3..10));
        let (kh, kw) = (r.random_range(1..=3.min(h)), r.random_range(1..=3.min(w)));
        let spec = LayerSpec::Conv2d {
            in_ch: c,
            out_ch: r.random_range(1..4),
            kh,
            kw,
            stride: r.random_range(1..3),
            pad: r.random_range(0..2),
            pad_mode: PadMode::Zeros,
            has_bias: r.random_bool(0.5),
        };
        let (nk, nb) = spec.param_counts();
        let layer = Layer {
            weights: LayerWeights {
                kernel: (0..nk).map(|_| r.random_range(-1.0..1.0)).collect(),
                bias: (0..nb).map(|_| r.random_range(-1.0..1.0)).collect(),
            },
            spec,
        };
        let x = random_tensor(&mut r, Shape::new(c, h, w));
        let a = netir::lower_conv2d(&layer.spec, &layer.weights, x.shape).unwrap();
        let got = a.apply(&netir::vectorize(&x)).unwrap();
        let want = conv_direct(&layer, &x);
        assert_eq!(a.out_shape, want.shape);
        assert!(rel_err(&got[..want.data.len()], &want.data) < 1e-12);
    }
}

#[test]
fn lowered_networks_match_direct_forward() {
    let mut r = rng(2);
    for net in [zoo::lenet(3), zoo::allconv(3), zoo::mixed_small(3), zoo::linear_stack(3)] {
        let lowered = lower_network(&net).unwrap();
        for _ in 0..3 {
            let x = random_tensor(&mut r, net.input_shape);
            let got = lowered.forward(&netir::vectorize(&x)).unwrap();
            let want = forward_direct(&net, &x);
            assert!(rel_err(&got[..want.len()], &want) < 1e-12);
            assert_eq!(*got.last().unwrap(), 1.0);
        }
    }
}

#[test]
fn key_inverse_matches_nalgebra() {
    for (dim, alpha, seed) in [(7, 1, 1), (16, 2, 2), (30, 4, 3), (64, 8, 4), (13, 8, 5)] {
        let key = gen_key(&KeyGenConfig::new(dim, alpha, seed)).unwrap();
        let n = dim + 1;
        let fwd = to_nalgebra(n, n, &key.forward().to_dense());
        let inv = fwd.clone().try_inverse().expect("key is invertible");
        let ours = to_nalgebra(n, n, &key.inverse().to_dense());
        assert!((inv - &ours).amax() < 1e-10);
        let eye = fwd * ours;
        assert!((eye - nalgebra::DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
    }
}

#[test]
fn sparse_matmul_matches_nalgebra() {
    let mut r = rng(3);
    for _ in 0..20 {
        let (m, k, n) = (r.random_range(1..40), r.random_range(1..40), r.random_range(1..40));
        let rand_sparse = |r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize| {
            let t: Vec<_> = (0..rows * cols / 4 + 1)
                .map(|_| (r.random_range(0..rows), r.random_range(0..cols), r.random_range(-1.0..1.0)))
                .collect();
            CooMatrix::from_triplets(rows, cols, t).unwrap()
        };
        let a = rand_sparse(&mut r, m, k);
        let b = rand_sparse(&mut r, k, n);
        let c = a.matmul(&b).unwrap();
        let want = to_nalgebra(m, k, &a.to_dense()) * to_nalgebra(k, n, &b.to_dense());
        assert!((to_nalgebra(m, n, &c.to_dense()) - want).amax() < 1e-12);
    }
}

#[test]
fn keyed_inference_matches_keyed_direct_forward() {
    let mut r = rng(4);
    for (net, alpha) in [(zoo::mixed_small(5), 4), (zoo::linear_stack(5), 2), (zoo::allconv(5), 8)] {
        let lowered = lower_network(&net).unwrap();
        let chain = assign_keys(&net, alpha, 17, false).unwrap();
        let kn = build_keynet(&lowered, &chain).unwrap();
        for _ in 0..3 {
            let x = random_tensor(&mut r, net.input_shape);
            let y_hat = kn.forward(&encode_image(&x, &chain).unwrap()).unwrap();
            let mut plain = forward_direct(&net, &x);
            plain.push(1.0);
            let want = chain.output_key().apply(&plain).unwrap();
            assert!(rel_err(&y_hat, &want) < 1e-9);
            let y = decode_output(&chain, &y_hat).unwrap();
            assert!(rel_err(&y, &plain) < 1e-9);
        }
    }
}

#[test]
fn nonneg_split_reconstructs_keyed_layers() {
    let net = zoo::mixed_small(6);
    let lowered = lower_network(&net).unwrap();
    let chain = assign_keys(&net, 2, 6, false).unwrap();
    let kn = build_keynet(&lowered, &chain).unwrap();
    for (i, (k, p)) in kn.layers.iter().zip(&lowered.layers).enumerate() {
        let (KeyedLayer::Linear(w_hat), LoweredLayer::Affine(w)) = (k, p) else {
            continue;
        };
        let a = chain.keys()[i + 1].forward();
        let b = w.matrix.matmul(chain.keys()[i].inverse()).unwrap();
        let (bp, bn) = nonneg_split(&b);
        let recomb = a.matmul(&bp).unwrap().to_dense();
        let sub = a.matmul(&bn).unwrap().to_dense();
        let got: Vec<f64> = recomb.iter().zip(&sub).map(|(x, y)| x - y).collect();
        assert!(rel_err(&got, &w_hat.matrix.to_dense()) < 1e-12);
    }
}

#[test]
fn high_alpha_encoding_hides_natural_image() {
    let img = natural_image(28, 28, 2);
    let shape = Shape::new(1, 28, 28);
    let key = gen_key(&KeyGenConfig::new(784, 8, 12)).unwrap();
    let enc = key.apply(&netir::vectorize(&img)).unwrap();
    let enc_img = Tensor3::new(shape, enc[..784].to_vec()).unwrap();
    let s = ssim(&img, &enc_img, &SsimParams::default()).unwrap();
    assert!(s < 0.2, "ssim {s}");
}

#[test]
fn cmos_monte_carlo_small() {
    let cfg = CmosConfig {
        quantum_efficiency: 0.7,
        dark_offset: 5.0,
        dark_variance: 2.0,
        dark_slope: 4.0,
        integration_time: 0.5,
        system_gain: 1.5,
        adc_noise_var: 0.8,
        ..CmosConfig::ideal(Shape::new(1, 100, 200))
    };
    let img = Tensor3::new(cfg.shape(), vec![40.0; 20_000]).unwrap();
    let out = simulate_cmos_analog(&img, &cfg, 5, NoiseMode::Stochastic, Exec::Parallel).unwrap();
    let n = out.data.len() as f64;
    let mean = out.data.iter().sum::<f64>() / n;
    let var = out.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let (mu, sigma2) = cmos_moments(&cfg, 40.0, 0);
    assert!((mean - mu).abs() / mu < 0.01);
    assert!((var - sigma2).abs() / sigma2 < 0.05);
}
