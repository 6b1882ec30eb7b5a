//! Sequential vs parallel kernels. Build without default features to compare
//! against a binary with no rayon at all.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use keynet_core::exec::Exec;
use keynet_core::keynet::{assign_keys, build_keynet, encode_image, KeyedLayer};
use keynet_core::keys::{gen_key, KeyGenConfig};
use keynet_core::netir::{lower_network, relu_homogeneous, zoo, Shape, Tensor3};
use keynet_core::sensor::{simulate_cmos_analog, CmosConfig, NoiseMode};
use keynet_core::sparsekit::{CooMatrix, TiledMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn random_coo(r: &mut ChaCha8Rng, n: usize, m: usize, nnz: usize) -> CooMatrix {
    CooMatrix::from_triplets(n, m, (0..nnz).map(|_| (r.random_range(0..n), r.random_range(0..m), r.random::<f64>())))
        .unwrap()
}

fn sparse(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let a = random_coo(&mut r, 20_000, 20_000, 400_000);
    let v: Vec<f64> = (0..20_000).map(|_| r.random()).collect();
    let tiled = TiledMatrix::from_coo(&a, 16).unwrap();
    let key = gen_key(&KeyGenConfig::new(4_000, 4, 2)).unwrap();
    let w = random_coo(&mut r, 4_001, 4_001, 40_000);

    let mut g = c.benchmark_group("sparse");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("coo_matvec", name), &exec, |b, &e| {
            b.iter(|| a.matvec_with(black_box(&v), e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("tiled_matvec", name), &exec, |b, &e| {
            b.iter(|| tiled.matvec_with(black_box(&v), e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("key_matmul", name), &exec, |b, &e| {
            b.iter(|| key.forward().matmul_with(black_box(&w), e).unwrap())
        });
    }
    g.finish();
}

fn keyed_lenet(c: &mut Criterion) {
    let net = zoo::lenet(1);
    let chain = assign_keys(&net, 4, 3, false).unwrap();
    let kn = build_keynet(&lower_network(&net).unwrap(), &chain).unwrap();
    let x = Tensor3::new(net.input_shape, vec![0.5; net.input_shape.len()]).unwrap();
    let enc = encode_image(&x, &chain).unwrap();

    let mut g = c.benchmark_group("keyed_lenet");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("forward", name), &exec, |b, &e| {
            b.iter(|| {
                let mut act = enc.data.clone();
                for layer in &kn.layers {
                    act = layer.affine().matrix.matvec_with(&act, e).unwrap();
                    if let KeyedLayer::Relu(_) = layer {
                        relu_homogeneous(&mut act);
                    }
                }
                act
            })
        });
    }
    g.finish();
}

fn cmos(c: &mut Criterion) {
    let shape = Shape::new(1, 512, 512);
    let img = Tensor3::new(shape, vec![300.0; shape.len()]).unwrap();
    let cfg = CmosConfig {
        quantum_efficiency: 0.7,
        dark_offset: 5.0,
        dark_variance: 2.0,
        dark_slope: 3.0,
        integration_time: 1.0,
        adc_noise_var: 1.0,
        ..CmosConfig::ideal(shape)
    };
    let mut g = c.benchmark_group("cmos");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("stochastic_512", name), &exec, |b, &e| {
            b.iter(|| simulate_cmos_analog(&img, &cfg, 7, NoiseMode::Stochastic, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sparse, keyed_lenet, cmos);
criterion_main!(benches);
