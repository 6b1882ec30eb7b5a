//! Keyed networks.
//!
//! Boundary `i` of a network (the input is boundary 0) gets a key `A_i`. A
//! linear layer `W_i` becomes `A_i * W_i * A_{i-1}^-1`, and a ReLU layer
//! becomes `relu(M_i * x)` with `M_i = A_i * A_{i-1}^-1`. The latter needs
//! `A_i` to be a nonnegative scaled permutation so that it commutes with the
//! ReLU. Running the keyed layers on `A_0 [x; 1]` yields `A_k N(x)`.

mod chain;
mod container;
mod report;

use crate::error::{Error, Result};
use crate::netir::{self, relu_homogeneous, LoweredLayer, LoweredNetwork, Shape, SparseAffine, Tensor3};
use crate::sparsekit::DenseVector;

pub use chain::{assign_keys, KeyChain, CHAIN_MANIFEST};
pub use container::{LayerIntegrity, KEYNET_MANIFEST};
pub use report::{
    memory_stats, sparsity_audit, verify_homomorphism, HomomorphismReport, LayerMemory, MemoryReport,
    SparsityAudit,
};

/// One published layer. Both variants hold only products of keys and
/// weights, never a key on its own.
#[derive(Debug, Clone, PartialEq)]
pub enum KeyedLayer {
    /// `A_i * W_i * A_{i-1}^-1`.
    Linear(SparseAffine),
    /// `A_i * A_{i-1}^-1`, followed by a ReLU at inference time.
    Relu(SparseAffine),
}

impl KeyedLayer {
    pub fn affine(&self) -> &SparseAffine {
        match self {
            KeyedLayer::Linear(a) | KeyedLayer::Relu(a) => a,
        }
    }

    pub fn affine_mut(&mut self) -> &mut SparseAffine {
        match self {
            KeyedLayer::Linear(a) | KeyedLayer::Relu(a) => a,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            KeyedLayer::Linear(_) => "linear",
            KeyedLayer::Relu(_) => "relu",
        }
    }

    fn apply(&self, x: &[f64]) -> Result<DenseVector> {
        match self {
            KeyedLayer::Linear(a) => a.apply(x),
            KeyedLayer::Relu(m) => {
                let mut y = m.apply(x)?;
                relu_homogeneous(&mut y);
                Ok(y)
            }
        }
    }
}

/// The public artifact: keyed layers plus the fingerprint of the image key
/// they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedNetwork {
    pub layers: Vec<KeyedLayer>,
    pub fingerprint: String,
    pub alpha: usize,
    pub input_shape: Shape,
    pub output_shape: Shape,
}

/// An image after the optical transform `A_0 [x; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    pub data: DenseVector,
    pub shape: Shape,
    pub fingerprint: String,
}

/// Materializes every keyed layer. Linear layers are multiplied left to
/// right as `(A_i * W_i) * A_{i-1}^-1`.
pub fn build_keynet(lowered: &LoweredNetwork, chain: &KeyChain) -> Result<KeyedNetwork> {
    chain.check_against(lowered)?;
    let mut layers = Vec::with_capacity(lowered.layers.len());
    for (i, layer) in lowered.layers.iter().enumerate() {
        let prev = &chain.keys()[i];
        let next = &chain.keys()[i + 1];
        let keyed = match layer {
            LoweredLayer::Affine(w) => {
                let left = next.forward().matmul(&w.matrix)?;
                let m = left.matmul(prev.inverse())?;
                KeyedLayer::Linear(SparseAffine::new(m, w.in_shape, w.out_shape)?)
            }
            LoweredLayer::Relu(shape) => {
                if next.alpha() != 1 || !next.is_scaled_permutation() {
                    return Err(Error::Contract(format!(
                        "boundary {} feeds from a ReLU but its key is not a bias-free scaled permutation",
                        i + 1
                    )));
                }
                let m = next.forward().matmul(prev.inverse())?;
                KeyedLayer::Relu(SparseAffine::new(m, *shape, *shape)?)
            }
        };
        layers.push(keyed);
    }
    Ok(KeyedNetwork {
        layers,
        fingerprint: chain.image_key().fingerprint(),
        alpha: chain.alpha(),
        input_shape: lowered.input_shape,
        output_shape: lowered.output_shape,
    })
}

/// Applies the image key to `image`.
pub fn encode_image(image: &Tensor3, chain: &KeyChain) -> Result<EncodedImage> {
    let x = netir::vectorize_as(image, chain.input_shape())?;
    let key = chain.image_key();
    Ok(EncodedImage {
        data: key.apply(&x)?,
        shape: image.shape,
        fingerprint: key.fingerprint(),
    })
}

/// Recovers the raw image from an encoding; requires the secret image key.
pub fn decode_image(encoded: &EncodedImage, chain: &KeyChain) -> Result<Tensor3> {
    let key = chain.image_key();
    if encoded.fingerprint != key.fingerprint() {
        return Err(Error::WrongSensor {
            expected: key.fingerprint(),
            found: encoded.fingerprint.clone(),
        });
    }
    let x = key.unapply(&encoded.data)?;
    netir::devectorize(&x, encoded.shape)
}

impl KeyedNetwork {
    /// Keyed inference; see [`keyed_forward`].
    pub fn forward(&self, encoded: &EncodedImage) -> Result<DenseVector> {
        Ok(self.forward_trace(encoded)?.pop().unwrap())
    }

    /// Keyed activations at every boundary, input included.
    pub fn forward_trace(&self, encoded: &EncodedImage) -> Result<Vec<DenseVector>> {
        if encoded.fingerprint != self.fingerprint {
            return Err(Error::WrongSensor {
                expected: self.fingerprint.clone(),
                found: encoded.fingerprint.clone(),
            });
        }
        self.forward_trace_raw(&encoded.data)
    }

    pub(crate) fn forward_trace_raw(&self, x: &[f64]) -> Result<Vec<DenseVector>> {
        netir::check_homogeneous(x, self.input_shape, "keyed_forward")?;
        let mut acts = vec![x.to_vec()];
        for layer in &self.layers {
            let next = layer.apply(acts.last().unwrap())?;
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn boundary_shapes(&self) -> Vec<Shape> {
        std::iter::once(self.input_shape)
            .chain(self.layers.iter().map(|l| l.affine().out_shape))
            .collect()
    }
}

/// Runs the keyed network on an encoded image and returns `A_k N(x)`.
pub fn keyed_forward(kn: &KeyedNetwork, encoded: &EncodedImage) -> Result<DenseVector> {
    kn.forward(encoded)
}

/// Removes the output key: `A_k^-1 y_hat`.
pub fn decode_output(chain: &KeyChain, y_hat: &[f64]) -> Result<DenseVector> {
    chain.output_key().unapply(y_hat)
}
