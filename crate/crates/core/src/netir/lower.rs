//! Lowering of linear layers to affine-augmented sparse (Toeplitz) matrices.

use super::{Layer, LayerSpec, LayerWeights, LoweredLayer, LoweredNetwork, NetworkDef, PadMode, Shape, SparseAffine};
use crate::error::{Error, Result};
use crate::sparsekit::CooMatrix;

fn affine(triplets: Vec<(usize, usize, f64)>, bias: &[f64], in_shape: Shape, out_shape: Shape) -> Result<SparseAffine> {
    let (n_in, n_out) = (in_shape.len(), out_shape.len());
    let mut t = triplets;
    t.extend(bias.iter().enumerate().map(|(r, &b)| (r, n_in, b)));
    t.push((n_out, n_in, 1.0));
    let m = CooMatrix::from_triplets(n_out + 1, n_in + 1, t)?;
    SparseAffine::new(m, in_shape, out_shape)
}

/// Toeplitz matrix of a strided, zero-padded 2-D cross-correlation. Row
/// `(o, y, x)` holds `kernel[o][c][ky][kx]` at column
/// `(c, y * stride + ky - pad, x * stride + kx - pad)` for every tap that
/// lands inside the image; taps in the padding contribute nothing. A bias
/// goes into the augmented column.
pub fn lower_conv2d(spec: &LayerSpec, weights: &LayerWeights, in_shape: Shape) -> Result<SparseAffine> {
    let LayerSpec::Conv2d {
        in_ch,
        out_ch,
        kh,
        kw,
        stride,
        pad,
        pad_mode,
        ..
    } = *spec
    else {
        return Err(Error::Contract(format!("lower_conv2d called on {}", spec.kind())));
    };
    if pad_mode != PadMode::Zeros {
        return Err(Error::UnsupportedPadding(format!("{pad_mode:?}").to_lowercase()));
    }
    let out_shape = spec.output_shape(in_shape)?;
    check_params(spec, weights)?;
    let (h, w) = (in_shape.height as isize, in_shape.width as isize);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let mut t = Vec::with_capacity(out_shape.len() * in_ch * kh * kw);
    for o in 0..out_ch {
        for y in 0..oh {
            for x in 0..ow {
                let row = (o * oh + y) * ow + x;
                for c in 0..in_ch {
                    for ky in 0..kh {
                        let iy = (y * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (x * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w {
                                continue;
                            }
                            let k = weights.kernel[((o * in_ch + c) * kh + ky) * kw + kx];
                            let col = (c * in_shape.height + iy as usize) * in_shape.width + ix as usize;
                            t.push((row, col, k));
                        }
                    }
                }
            }
        }
    }
    let bias: Vec<f64> = if weights.bias.is_empty() {
        Vec::new()
    } else {
        (0..out_ch)
            .flat_map(|o| std::iter::repeat_n(weights.bias[o], oh * ow))
            .collect()
    };
    affine(t, &bias, in_shape, out_shape)
}

/// Average pooling over `k x k` windows with the given stride, no padding.
pub fn lower_avgpool(spec: &LayerSpec, in_shape: Shape) -> Result<SparseAffine> {
    let LayerSpec::AvgPool { k, stride } = *spec else {
        return Err(Error::Contract(format!("lower_avgpool called on {}", spec.kind())));
    };
    let out_shape = spec.output_shape(in_shape)?;
    let weight = 1.0 / (k * k) as f64;
    let (oh, ow) = (out_shape.height, out_shape.width);
    let mut t = Vec::with_capacity(out_shape.len() * k * k);
    for c in 0..in_shape.channels {
        for y in 0..oh {
            for x in 0..ow {
                let row = (c * oh + y) * ow + x;
                for dy in 0..k {
                    for dx in 0..k {
                        let col = (c * in_shape.height + y * stride + dy) * in_shape.width + x * stride + dx;
                        t.push((row, col, weight));
                    }
                }
            }
        }
    }
    affine(t, &[], in_shape, out_shape)
}

/// Fully connected layer; `weights.kernel` is `out_dim x in_dim` row-major.
pub fn lower_dense(spec: &LayerSpec, weights: &LayerWeights, in_shape: Shape) -> Result<SparseAffine> {
    let LayerSpec::Dense { in_dim, out_dim, .. } = *spec else {
        return Err(Error::Contract(format!("lower_dense called on {}", spec.kind())));
    };
    let out_shape = spec.output_shape(in_shape)?;
    check_params(spec, weights)?;
    let t = weights
        .kernel
        .iter()
        .enumerate()
        .map(|(i, &v)| (i / in_dim, i % in_dim, v))
        .collect();
    debug_assert_eq!(out_shape.len(), out_dim);
    affine(t, &weights.bias, in_shape, out_shape)
}

fn check_params(spec: &LayerSpec, weights: &LayerWeights) -> Result<()> {
    let (nk, nb) = spec.param_counts();
    if weights.kernel.len() != nk {
        return Err(Error::shape("layer kernel", nk, weights.kernel.len()));
    }
    if weights.bias.len() != nb {
        return Err(Error::shape("layer bias", nb, weights.bias.len()));
    }
    Ok(())
}

fn lower_layer(layer: &Layer, in_shape: Shape) -> Result<LoweredLayer> {
    Ok(match &layer.spec {
        spec @ LayerSpec::Conv2d { .. } => LoweredLayer::Affine(lower_conv2d(spec, &layer.weights, in_shape)?),
        spec @ LayerSpec::AvgPool { .. } => LoweredLayer::Affine(lower_avgpool(spec, in_shape)?),
        spec @ LayerSpec::Dense { .. } => LoweredLayer::Affine(lower_dense(spec, &layer.weights, in_shape)?),
        LayerSpec::Relu => LoweredLayer::Relu(in_shape),
    })
}

/// Lowers every layer of `net`.
pub fn lower_network(net: &NetworkDef) -> Result<LoweredNetwork> {
    let shapes = net.boundary_shapes()?;
    let layers = net
        .layers
        .iter()
        .zip(&shapes)
        .map(|(layer, &s)| lower_layer(layer, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoweredNetwork {
        input_shape: net.input_shape,
        output_shape: *shapes.last().unwrap(),
        layers,
    })
}
