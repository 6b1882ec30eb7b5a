//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::Instant;

use common::*;
use keynet_core::analysis::{chosen_plaintext_attack, key_oracle, Probes};
use keynet_core::exec::Exec;
use keynet_core::imageio;
use keynet_core::keynet::{assign_keys, build_keynet, decode_image, decode_output, encode_image, memory_stats, KeyedNetwork};
use keynet_core::keys::{gen_key, gen_relu_key, KeyGenConfig, KeyMatrix};
use keynet_core::netir::{
    self, lower_avgpool, lower_conv2d, lower_dense, lower_network, relu_homogeneous, zoo, Layer, LayerSpec,
    LayerWeights, PadMode, Shape, Tensor3,
};
use keynet_core::sensor::{
    cmos_moments, realize_key, simulate_cmos_analog, simulate_fiber_bundle, simulate_pipeline, CmosConfig,
    FiberBundleConfig, NoiseMode, RealizeMode,
};
use keynet_core::sparsekit::{CooMatrix, TiledMatrix};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn strict_rel(got: &[f64], want: &[f64]) -> f64 {
    let d = got.iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let s = max_abs(want);
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

fn uniform_image(r: &mut impl Rng, shape: Shape) -> Tensor3 {
    Tensor3::new(shape, (0..shape.len()).map(|_| r.random::<f64>()).collect()).unwrap()
}

/// Keyed inference equals the keyed plain output on LeNet and AllConv.
fn homomorphism() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    let mut runs = 0;
    for (name, net) in [("lenet", zoo::lenet(1)), ("allconv", zoo::allconv(1))] {
        let lowered = lower_network(&net).unwrap();
        for alpha in [1, 2, 4, 8] {
            let chain = assign_keys(&net, alpha, 1000 + alpha as u64, false).unwrap();
            let kn = build_keynet(&lowered, &chain).unwrap();
            let mut err = 0.0f64;
            for _ in 0..100 {
                let x = uniform_image(&mut r, net.input_shape);
                let plain: Vec<f64> = forward_direct(&net, &x).into_iter().chain([1.0]).collect();
                let want = chain.output_key().apply(&plain).unwrap();
                let got = kn.forward(&encode_image(&x, &chain).unwrap()).unwrap();
                err = err.max(rel_err(&got, &want));
                runs += 1;
            }
            if err > 1e-6 {
                return outcome(false, format!("{name} alpha {alpha}: relative error {err:.3e} > 1e-6"));
            }
            worst = worst.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        secs < 60.0,
        format!("{runs} inputs, max relative error {worst:.3e} (tol 1e-6), {secs:.1} s (limit 60 s)"),
    )
}

/// ReLU commutes with scaled permutations.
fn relu_commutation() -> Outcome {
    let mut r = rng(102);
    let (mut bitwise_fail, mut worst) = (0, 0.0f64);
    for i in 0..1000 {
        let dim = r.random_range(1..=256);
        let pow2 = i % 2 == 0;
        let gains = if pow2 {
            let g = 2f64.powi(r.random_range(-4..=4));
            (g, g)
        } else {
            (0.5, 2.0)
        };
        let key = gen_relu_key(dim, r.random(), gains).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| r.random_range(-10.0..10.0)).collect();
        let mut y = key.linear_apply(&x).unwrap();
        y.push(1.0);
        relu_homogeneous(&mut y);
        y.pop();
        let back = key.linear_unapply(&y).unwrap();
        let want: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        if pow2 {
            if back != want {
                bitwise_fail += 1;
            }
        } else {
            worst = worst.max(strict_rel(&back, &want));
        }
    }
    outcome(
        bitwise_fail == 0 && worst <= 1e-12,
        format!("1000 keys: {bitwise_fail} bitwise mismatches with power-of-two gains, max relative error {worst:.3e} otherwise (tol 1e-12)"),
    )
}

fn dense_triple(n: usize, a: &[f64], w: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
    let mut aw = vec![0.0; n * m];
    for i in 0..n {
        for k in 0..n {
            if a[i * n + k] != 0.0 {
                for j in 0..m {
                    aw[i * m + j] += a[i * n + k] * w[k * m + j];
                }
            }
        }
    }
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for k in 0..m {
            if aw[i * m + k] != 0.0 {
                for j in 0..m {
                    out[i * m + j] += aw[i * m + k] * b[k * m + j];
                }
            }
        }
    }
    out
}

/// `nnz(A W B) <= alpha^2 nnz(W)`.
fn fill_bound() -> Outcome {
    let mut r = rng(103);
    let mut violations = 0;
    for t in 0..10_000 {
        let alpha = [1, 2, 4, 8][t % 4];
        let (n, m) = (r.random_range(1..=256), r.random_range(1..=256));
        let a = gen_key(&KeyGenConfig::new(n, alpha.min(n), r.random())).unwrap();
        let b = gen_key(&KeyGenConfig::new(m, alpha.min(m), r.random())).unwrap();
        let nnz_w = r.random_range(1..=(n * m).min(4 * (n + m)));
        let w = CooMatrix::from_triplets(
            n,
            m,
            (0..nnz_w).map(|_| (r.random_range(0..n), r.random_range(0..m), r.random_range(-1.0..1.0))),
        )
        .unwrap();
        let awb = a
            .forward()
            .leading_block(n, n)
            .matmul(&w)
            .unwrap()
            .matmul(&b.inverse().leading_block(m, m))
            .unwrap();
        if awb.nnz() > alpha * alpha * w.nnz() {
            violations += 1;
        }
    }
    // every single-nonzero W at dim 4, alpha 2, against a dense oracle
    let mut exhaustive_fail = 0;
    let mut cases = 0;
    for seed in 0..25u64 {
        let a = gen_key(&KeyGenConfig::new(4, 2, 2 * seed)).unwrap();
        let b = gen_key(&KeyGenConfig::new(4, 2, 2 * seed + 1)).unwrap();
        let (ad, bd) = (a.forward().leading_block(4, 4), b.inverse().leading_block(4, 4));
        for pos in 0..16 {
            let w = CooMatrix::from_triplets(4, 4, [(pos / 4, pos % 4, 1.5)]).unwrap();
            let mut wd = vec![0.0; 16];
            wd[pos] = 1.5;
            let oracle = dense_triple(4, &ad.to_dense(), &wd, 4, &bd.to_dense());
            let sparse = ad.matmul(&w).unwrap().matmul(&bd).unwrap();
            let oracle_nnz = oracle.iter().filter(|v| **v != 0.0).count();
            if oracle_nnz > 4 || sparse.nnz() > 4 || strict_rel(&sparse.to_dense(), &oracle) > 1e-15 {
                exhaustive_fail += 1;
            }
            cases += 1;
        }
    }
    outcome(
        violations == 0 && exhaustive_fail == 0,
        format!("{violations} violations in 10000 random triples; {exhaustive_fail} failures in {cases} exhaustive dim-4 alpha-2 cases"),
    )
}

fn random_layer(r: &mut impl Rng, spec: LayerSpec) -> Layer {
    let (nk, nb) = spec.param_counts();
    Layer {
        weights: LayerWeights {
            kernel: (0..nk).map(|_| r.random_range(-1.0..1.0)).collect(),
            bias: (0..nb).map(|_| r.random_range(-1.0..1.0)).collect(),
        },
        spec,
    }
}

/// Matrix lowering against sliding-window and pooling oracles.
fn lowering() -> Outcome {
    let mut r = rng(104);
    let (mut conv, mut pool, mut dense) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (c, h, w) = (r.random_range(1..5), r.random_range(1..16), r.random_range(1..16));
        let pad = r.random_range(0..3);
        let kh = r.random_range(1..=(h + 2 * pad).min(5));
        let kw = r.random_range(1..=(w + 2 * pad).min(5));
        let spec = LayerSpec::Conv2d {
            in_ch: c,
            out_ch: r.random_range(1..5),
            kh,
            kw,
            stride: r.random_range(1..4),
            pad,
            pad_mode: PadMode::Zeros,
            has_bias: r.random_bool(0.5),
        };
        let layer = random_layer(&mut r, spec);
        let x = random_tensor(&mut r, Shape::new(c, h, w));
        let got = lower_conv2d(&layer.spec, &layer.weights, x.shape).unwrap().apply(&netir::vectorize(&x)).unwrap();
        let want = conv_direct(&layer, &x).data;
        conv = conv.max(strict_rel(&got[..want.len()], &want));

        let (c, h, w) = (r.random_range(1..5), r.random_range(1..20), r.random_range(1..20));
        let k = r.random_range(1..=h.min(w).min(5));
        let spec = LayerSpec::AvgPool {
            k,
            stride: r.random_range(1..=k + 1),
        };
        let LayerSpec::AvgPool { stride, .. } = spec else { unreachable!() };
        let x = random_tensor(&mut r, Shape::new(c, h, w));
        let got = lower_avgpool(&spec, x.shape).unwrap().apply(&netir::vectorize(&x)).unwrap();
        let want = avgpool_direct(k, stride, &x).data;
        pool = pool.max(strict_rel(&got[..want.len()], &want));

        let shape = Shape::new(r.random_range(1..4), r.random_range(1..6), r.random_range(1..6));
        let spec = LayerSpec::Dense {
            in_dim: shape.len(),
            out_dim: r.random_range(1..40),
            has_bias: r.random_bool(0.5),
        };
        let layer = random_layer(&mut r, spec);
        let x = random_tensor(&mut r, shape);
        let got = lower_dense(&layer.spec, &layer.weights, shape).unwrap().apply(&netir::vectorize(&x)).unwrap();
        let want = dense_direct(&layer, &x).data;
        dense = dense.max(strict_rel(&got[..want.len()], &want));
    }
    outcome(
        conv <= 1e-12 && pool <= 1e-12 && dense <= 1e-12,
        format!("200 cases each, max relative error conv {conv:.2e}, avg_pool {pool:.2e}, dense {dense:.2e} (tol 1e-12)"),
    )
}

/// nnz ratio within alpha^2 and tiled storage smaller than COO on conv layers.
fn memory() -> Outcome {
    let net = zoo::lenet(1);
    let lowered = lower_network(&net).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [1, 2, 4, 8] {
        let chain = assign_keys(&net, alpha, 2000 + alpha as u64, true).unwrap();
        let kn = build_keynet(&lowered, &chain).unwrap();
        let mem = memory_stats(&kn, &lowered, 16).unwrap();
        let max_ratio = mem.layers.iter().map(|l| l.ratio).fold(0.0, f64::max);
        let bound = (alpha * alpha) as f64;
        let mut worst_tile = 0.0f64;
        for l in &mem.layers {
            if l.ratio > bound {
                pass = false;
            }
            if matches!(net.layers[l.layer].spec, LayerSpec::Conv2d { .. }) {
                let frac = l.tiled_bytes as f64 / l.coo_bytes as f64;
                worst_tile = worst_tile.max(frac);
                if l.tiled_bytes >= l.coo_bytes {
                    pass = false;
                }
            }
        }
        parts.push(format!("a={alpha}: max ratio {max_ratio:.2}, conv tiled/COO <= {worst_tile:.3}"));
    }
    outcome(pass, parts.join("; "))
}

/// Monte Carlo moments of the sensor model.
fn cmos_statistics() -> Outcome {
    let start = Instant::now();
    let shape = Shape::new(1, 250, 400);
    let base = CmosConfig::ideal(shape);
    let sets = [
        (50.0, CmosConfig { quantum_efficiency: 0.6, system_gain: 2.0, ..base.clone() }),
        (
            400.0,
            CmosConfig {
                quantum_efficiency: 0.8,
                dark_offset: 10.0,
                dark_variance: 4.0,
                dark_slope: 5.0,
                integration_time: 2.0,
                system_gain: 0.5,
                adc_noise_var: 1.0,
                ..base.clone()
            },
        ),
        (
            5000.0,
            CmosConfig {
                quantum_efficiency: 0.9,
                dark_offset: 20.0,
                dark_variance: 9.0,
                dark_slope: 30.0,
                integration_time: 1.0,
                system_gain: 1.2,
                adc_noise_var: 2.0,
                ..base.clone()
            },
        ),
        (
            8.0,
            CmosConfig {
                quantum_efficiency: 0.5,
                dark_offset: 3.0,
                dark_slope: 1.5,
                integration_time: 4.0,
                system_gain: 3.0,
                adc_noise_var: 0.25,
                ..base.clone()
            },
        ),
        (
            1500.0,
            CmosConfig {
                quantum_efficiency: 0.35,
                dark_variance: 25.0,
                system_gain: 1.0,
                adc_noise_var: 10.0,
                ..base.clone()
            },
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (photons, cfg)) in sets.iter().enumerate() {
        let img = Tensor3::new(shape, vec![*photons; shape.len()]).unwrap();
        let out = simulate_cmos_analog(&img, cfg, 500 + i as u64, NoiseMode::Stochastic, Exec::Parallel).unwrap();
        let n = out.data.len() as f64;
        let mean = out.data.iter().sum::<f64>() / n;
        let var = out.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let (mu, s2) = cmos_moments(cfg, *photons, 0);
        let (em, ev) = ((mean - mu).abs() / mu, (var - s2).abs() / s2);
        pass &= em <= 0.01 && ev <= 0.05;
        parts.push(format!("set{}: mean {:.3}%, var {:.2}%", i + 1, em * 100.0, ev * 100.0));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 10.0, format!("N=100000; {}; {secs:.2} s (limit 10 s)", parts.join(", ")))
}

/// Degenerate optics are the identity; alpha-1 keys are realized within one
/// ADC step.
fn fiber_degeneracy() -> Outcome {
    let mut r = rng(107);
    let mut identity_ok = true;
    for shape in [Shape::new(1, 8, 8), Shape::new(3, 5, 9), Shape::new(1, 28, 28)] {
        let img = uniform_image(&mut r, shape);
        let optical = simulate_fiber_bundle(&img, &FiberBundleConfig::identity(shape), 0).unwrap();
        let analog = simulate_cmos_analog(&optical, &CmosConfig::ideal(shape), 0, NoiseMode::Mean, Exec::Parallel).unwrap();
        identity_ok &= analog.data == img.data;
    }
    let shape = Shape::new(1, 8, 8);
    let templates = [
        CmosConfig::ideal(shape),
        CmosConfig {
            quantum_efficiency: 0.6,
            dark_offset: 15.0,
            dark_slope: 2.0,
            integration_time: 3.0,
            ..CmosConfig::ideal(shape)
        },
    ];
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let key = gen_key(&KeyGenConfig::new(64, 1, 700 + k)).unwrap();
        for t in &templates {
            let real = realize_key(&key, t, RealizeMode::Exact).unwrap();
            let img = uniform_image(&mut r, shape);
            let counts = simulate_pipeline(&img, &real, k, NoiseMode::Mean, Exec::Parallel).unwrap();
            let want = key.apply(&netir::vectorize(&img)).unwrap();
            for (c, w) in counts.data.iter().zip(&want) {
                worst = worst.max((c - w * real.photon_scale).abs());
            }
        }
    }
    outcome(
        identity_ok && worst <= 1.0,
        format!("identity bit-exact: {identity_ok}; 40 alpha-1 realizations at 16 bits, max deviation {worst:.3} ADC steps (limit 1)"),
    )
}

/// Basis-probe recovery of a dim-64, alpha-4 key.
fn attack() -> Outcome {
    let key = gen_key(&KeyGenConfig::new(64, 4, 108)).unwrap();
    let res = chosen_plaintext_attack(key_oracle(&key), 64, Probes::Basis, 108, 1e-9).unwrap();
    let entry_err = strict_rel(&res.recovered.to_dense(), &key.forward().to_dense());
    outcome(
        res.success && res.residual <= 1e-9,
        format!("{} probes, held-out residual {:.3e} (tol 1e-9), max entry error {entry_err:.2e}", res.probes, res.residual),
    )
}

/// Key, output, tiled and image round trips.
fn round_trips() -> Outcome {
    let mut r = rng(109);
    let mut key_err = 0.0f64;
    for alpha in [1, 2, 4, 8] {
        for _ in 0..25 {
            let dim = r.random_range(alpha..=300);
            let key = gen_key(&KeyGenConfig::new(dim, alpha, r.random())).unwrap();
            let mut x: Vec<f64> = (0..dim).map(|_| r.random_range(-5.0..5.0)).collect();
            x.push(1.0);
            key_err = key_err.max(rel_err(&key.unapply(&key.apply(&x).unwrap()).unwrap(), &x));
        }
    }
    let net = zoo::lenet(1);
    let lowered = lower_network(&net).unwrap();
    let chain = assign_keys(&net, 8, 109, false).unwrap();
    let mut out_err = 0.0f64;
    for _ in 0..50 {
        let mut y: Vec<f64> = (0..10).map(|_| r.random_range(-5.0..5.0)).collect();
        y.push(1.0);
        let back = decode_output(&chain, &chain.output_key().apply(&y).unwrap()).unwrap();
        out_err = out_err.max(rel_err(&back, &y));
    }
    let kn = build_keynet(&lowered, &chain).unwrap();
    let mut tiled_ok = true;
    for l in &kn.layers {
        let m = &l.affine().matrix;
        for t in [4, 16, 64] {
            tiled_ok &= TiledMatrix::from_coo(m, t).unwrap().to_coo().bit_eq(m);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    kn.save(&dir.path().join("kn"), Some(16)).unwrap();
    let container_ok = KeyedNetwork::load(&dir.path().join("kn")).unwrap() == kn;
    let mut img_err = 0.0f64;
    let mut file_ok = true;
    for i in 0..10 {
        let x = uniform_image(&mut r, net.input_shape);
        let enc = encode_image(&x, &chain).unwrap();
        let p = dir.path().join(format!("e{i}.f64"));
        imageio::write_encoded(&p, &enc).unwrap();
        let read = imageio::read_encoded(&p).unwrap();
        file_ok &= read == enc;
        let back = decode_image(&read, &chain).unwrap();
        img_err = img_err.max(rel_err(&back.data, &x.data));
    }
    let identity_key = KeyMatrix::identity(5);
    let v = vec![0.1, 0.2, 0.3, 0.4, 0.5, 1.0];
    let identity_ok = identity_key.unapply(&identity_key.apply(&v).unwrap()).unwrap() == v;
    let worst = key_err.max(out_err).max(img_err);
    outcome(
        worst <= 1e-9 && tiled_ok && container_ok && file_ok && identity_ok,
        format!(
            "key {key_err:.2e}, output {out_err:.2e}, image {img_err:.2e} (tol 1e-9); tiled<->COO bitwise {tiled_ok}; container bitwise {container_ok}; encoded file bitwise {file_ok}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("homomorphism exactness", homomorphism),
        ("ReLU commutes with scaled permutations", relu_commutation),
        ("sparsity bound alpha^2", fill_bound),
        ("Toeplitz lowering soundness", lowering),
        ("memory scaling", memory),
        ("CMOS statistics", cmos_statistics),
        ("fiber-bundle degeneracy", fiber_degeneracy),
        ("chosen-plaintext attack", attack),
        ("round trips", round_trips),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = match std::panic::catch_unwind(run) {
            Ok(o) => o,
            Err(_) => outcome(false, "panicked".into()),
        };
        if !o.pass {
            failed += 1;
        }
        println!("[{}] criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
