//! Independent reference implementations shared by the integration tests.
//! Nothing here goes through the sparse lowering.

#![allow(dead_code)]

use keynet_core::netir::{Layer, LayerSpec, NetworkDef, Shape, Tensor3};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sliding-window cross-correlation with zero padding.
pub fn conv_direct(layer: &Layer, x: &Tensor3) -> Tensor3 {
    let LayerSpec::Conv2d { in_ch, out_ch, kh, kw, stride, pad, .. } = layer.spec else {
        panic!("not a conv layer")
    };
    let (h, w) = (x.shape.height as isize, x.shape.width as isize);
    let oh = (x.shape.height + 2 * pad - kh) / stride + 1;
    let ow = (x.shape.width + 2 * pad - kw) / stride + 1;
    let k = &layer.weights.kernel;
    let mut out = Vec::with_capacity(out_ch * oh * ow);
    for o in 0..out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = layer.weights.bias.get(o).copied().unwrap_or(0.0);
                for c in 0..in_ch {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = (oy * stride + dy) as isize - pad as isize;
                            let ix = (ox * stride + dx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h || ix >= w {
                                continue;
                            }
                            s += k[((o * in_ch + c) * kh + dy) * kw + dx] * x.at(c, iy as usize, ix as usize);
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    Tensor3::new(Shape::new(out_ch, oh, ow), out).unwrap()
}

pub fn avgpool_direct(k: usize, stride: usize, x: &Tensor3) -> Tensor3 {
    let oh = (x.shape.height - k) / stride + 1;
    let ow = (x.shape.width - k) / stride + 1;
    let mut out = Vec::new();
    for c in 0..x.shape.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for dy in 0..k {
                    for dx in 0..k {
                        s += x.at(c, oy * stride + dy, ox * stride + dx);
                    }
                }
                out.push(s / (k * k) as f64);
            }
        }
    }
    Tensor3::new(Shape::new(x.shape.channels, oh, ow), out).unwrap()
}

pub fn dense_direct(layer: &Layer, x: &Tensor3) -> Tensor3 {
    let LayerSpec::Dense { in_dim, out_dim, .. } = layer.spec else {
        panic!("not a dense layer")
    };
    let out = (0..out_dim)
        .map(|o| {
            let b = layer.weights.bias.get(o).copied().unwrap_or(0.0);
            (0..in_dim).fold(b, |s, i| s + layer.weights.kernel[o * in_dim + i] * x.data[i])
        })
        .collect();
    Tensor3::new(Shape::flat(out_dim), out).unwrap()
}

pub fn layer_direct(layer: &Layer, x: &Tensor3) -> Tensor3 {
    match layer.spec {
        LayerSpec::Conv2d { .. } => conv_direct(layer, x),
        LayerSpec::AvgPool { k, stride } => avgpool_direct(k, stride, x),
        LayerSpec::Dense { .. } => dense_direct(layer, x),
        LayerSpec::Relu => Tensor3::new(x.shape, x.data.iter().map(|v| v.max(0.0)).collect()).unwrap(),
    }
}

/// Plain network output computed layer by layer with the direct oracles.
pub fn forward_direct(net: &NetworkDef, x: &Tensor3) -> Vec<f64> {
    let mut cur = x.clone();
    for layer in &net.layers {
        cur = layer_direct(layer, &cur);
    }
    cur.data
}

pub fn random_tensor(r: &mut impl Rng, shape: Shape) -> Tensor3 {
    Tensor3::new(shape, (0..shape.len()).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn to_nalgebra(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `|a - b|_inf / (1 + |b|_inf)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / (1.0 + max_abs(b))
}
