//! Reference topologies with seeded random weights.

use rand::Rng;

use super::{Layer, LayerSpec, LayerWeights, NetworkDef, PadMode, Shape};
use crate::rng;

/// Random conv layer with fan-in scaled uniform weights.
pub fn conv_layer(seed: u64, index: u64, in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize) -> Layer {
    let spec = LayerSpec::Conv2d {
        in_ch,
        out_ch,
        kh: k,
        kw: k,
        stride,
        pad,
        pad_mode: PadMode::Zeros,
        has_bias: true,
    };
    let weights = random_weights(seed, index, &spec, (in_ch * k * k) as f64);
    Layer { spec, weights }
}

/// Random fully connected layer.
pub fn dense_layer(seed: u64, index: u64, in_dim: usize, out_dim: usize) -> Layer {
    let spec = LayerSpec::Dense {
        in_dim,
        out_dim,
        has_bias: true,
    };
    let weights = random_weights(seed, index, &spec, in_dim as f64);
    Layer { spec, weights }
}

fn random_weights(seed: u64, index: u64, spec: &LayerSpec, fan_in: f64) -> LayerWeights {
    let mut r = rng::split(seed, "weights", index);
    let (nk, nb) = spec.param_counts();
    let scale = 1.0 / fan_in.sqrt();
    LayerWeights {
        kernel: (0..nk).map(|_| r.random_range(-scale..scale)).collect(),
        bias: (0..nb).map(|_| r.random_range(-0.1..0.1)).collect(),
    }
}

/// Two-layer network on a 2x2 image: a `[-1, 1]` horizontal difference
/// kernel followed by ReLU.
pub fn keynet_example() -> NetworkDef {
    NetworkDef {
        input_shape: Shape::new(1, 2, 2),
        layers: vec![
            Layer {
                spec: LayerSpec::Conv2d {
                    in_ch: 1,
                    out_ch: 1,
                    kh: 1,
                    kw: 2,
                    stride: 1,
                    pad: 0,
                    pad_mode: PadMode::Zeros,
                    has_bias: false,
                },
                weights: LayerWeights {
                    kernel: vec![-1.0, 1.0],
                    bias: vec![],
                },
            },
            Layer::relu(),
        ],
    }
}

/// LeNet-5 layout on 1x28x28 with average pooling.
pub fn lenet(seed: u64) -> NetworkDef {
    NetworkDef {
        input_shape: Shape::new(1, 28, 28),
        layers: vec![
            conv_layer(seed, 0, 1, 6, 5, 1, 2),
            Layer::relu(),
            Layer::avg_pool(2, 2),
            conv_layer(seed, 3, 6, 16, 5, 1, 0),
            Layer::relu(),
            Layer::avg_pool(2, 2),
            dense_layer(seed, 6, 16 * 5 * 5, 120),
            Layer::relu(),
            dense_layer(seed, 8, 120, 84),
            Layer::relu(),
            dense_layer(seed, 10, 84, 10),
        ],
    }
}

/// All-convolutional layout on 1x28x28: strided convolutions instead of
/// pooling, a 1x1 classifier conv and a global average pool.
pub fn allconv(seed: u64) -> NetworkDef {
    NetworkDef {
        input_shape: Shape::new(1, 28, 28),
        layers: vec![
            conv_layer(seed, 0, 1, 8, 3, 1, 1),
            Layer::relu(),
            conv_layer(seed, 2, 8, 8, 3, 2, 1),
            Layer::relu(),
            conv_layer(seed, 4, 8, 16, 3, 1, 1),
            Layer::relu(),
            conv_layer(seed, 6, 16, 16, 3, 2, 1),
            Layer::relu(),
            conv_layer(seed, 8, 16, 10, 1, 1, 0),
            Layer::relu(),
            Layer::avg_pool(7, 7),
        ],
    }
}

/// ReLU-free conv, pool and dense stack on 2x8x8.
pub fn linear_stack(seed: u64) -> NetworkDef {
    NetworkDef {
        input_shape: Shape::new(2, 8, 8),
        layers: vec![
            conv_layer(seed, 0, 2, 3, 3, 1, 1),
            Layer::avg_pool(2, 2),
            dense_layer(seed, 2, 3 * 4 * 4, 5),
        ],
    }
}

/// Small mixed conv/relu/pool/dense network on 1x12x12.
pub fn mixed_small(seed: u64) -> NetworkDef {
    NetworkDef {
        input_shape: Shape::new(1, 12, 12),
        layers: vec![
            conv_layer(seed, 0, 1, 4, 3, 1, 1),
            Layer::relu(),
            Layer::avg_pool(2, 2),
            conv_layer(seed, 3, 4, 4, 3, 2, 1),
            Layer::relu(),
            dense_layer(seed, 5, 4 * 3 * 3, 6),
        ],
    }
}
