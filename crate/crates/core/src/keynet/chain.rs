use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keys::{self, KeyGenConfig, KeyMatrix, DEFAULT_GAIN_RANGE};
use crate::netir::{LoweredNetwork, NetworkDef, Shape};
use crate::rng;
use crate::store;

pub const CHAIN_MANIFEST: &str = "chain.json";

/// Secret keys `A_0 .. A_k`, one per layer boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyChain {
    shapes: Vec<Shape>,
    keys: Vec<KeyMatrix>,
    alpha: usize,
    seed: u64,
    output_public: bool,
}

/// Draws the key chain for `net`. Boundaries produced by a ReLU get
/// bias-free scaled-permutation keys; every other boundary gets an
/// `alpha`-sparse key with bias (capped at the boundary dimension). The
/// output key is the identity iff `output_public`.
pub fn assign_keys(net: &NetworkDef, alpha: usize, seed: u64, output_public: bool) -> Result<KeyChain> {
    if alpha == 0 {
        return Err(Error::Parameter("alpha must be >= 1".into()));
    }
    let shapes = net.boundary_shapes()?;
    let last = shapes.len() - 1;
    let keys = shapes
        .iter()
        .enumerate()
        .map(|(i, shape)| {
            let dim = shape.len();
            let key_seed = rng::derive_seed(seed, "boundary", i as u64);
            if i == last && output_public {
                Ok(KeyMatrix::identity(dim))
            } else if i > 0 && net.layers[i - 1].spec.is_relu() {
                keys::gen_relu_key(dim, key_seed, DEFAULT_GAIN_RANGE)
            } else {
                keys::gen_key(&KeyGenConfig::new(dim, alpha.min(dim), key_seed))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KeyChain {
        shapes,
        keys,
        alpha,
        seed,
        output_public,
    })
}

impl KeyChain {
    /// All-identity chain; the keyed network equals the plain one.
    pub fn identity(net: &NetworkDef) -> Result<Self> {
        let shapes = net.boundary_shapes()?;
        let keys = shapes.iter().map(|s| KeyMatrix::identity(s.len())).collect();
        Ok(KeyChain {
            shapes,
            keys,
            alpha: 1,
            seed: 0,
            output_public: true,
        })
    }

    pub fn from_keys(
        shapes: Vec<Shape>,
        keys: Vec<KeyMatrix>,
        alpha: usize,
        seed: u64,
        output_public: bool,
    ) -> Result<Self> {
        if shapes.len() != keys.len() || keys.is_empty() {
            return Err(Error::shape("KeyChain::from_keys", shapes.len(), keys.len()));
        }
        for (i, (s, k)) in shapes.iter().zip(&keys).enumerate() {
            if s.len() != k.dim() {
                return Err(Error::Shape {
                    context: "key chain boundary",
                    expected: format!("dim {} at boundary {i}", s.len()),
                    found: k.dim().to_string(),
                });
            }
        }
        Ok(KeyChain {
            shapes,
            keys,
            alpha,
            seed,
            output_public,
        })
    }

    pub fn keys(&self) -> &[KeyMatrix] {
        &self.keys
    }
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }
    pub fn alpha(&self) -> usize {
        self.alpha
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn output_public(&self) -> bool {
        self.output_public
    }
    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }
    pub fn image_key(&self) -> &KeyMatrix {
        &self.keys[0]
    }
    pub fn output_key(&self) -> &KeyMatrix {
        self.keys.last().unwrap()
    }

    pub(crate) fn check_against(&self, lowered: &LoweredNetwork) -> Result<()> {
        let shapes = lowered.boundary_shapes();
        if shapes.len() != self.keys.len() {
            return Err(Error::shape("key chain length", shapes.len(), self.keys.len()));
        }
        for (i, (s, k)) in shapes.iter().zip(&self.keys).enumerate() {
            if s.len() != k.dim() {
                return Err(Error::Shape {
                    context: "key chain vs network",
                    expected: format!("dim {} at boundary {i}", s.len()),
                    found: k.dim().to_string(),
                });
            }
        }
        Ok(())
    }

    /// Writes `chain.json` plus one key directory per boundary.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut boundaries = Vec::with_capacity(self.keys.len());
        for (i, (k, s)) in self.keys.iter().zip(&self.shapes).enumerate() {
            let name = format!("key{i:03}");
            k.save(&dir.join(&name))?;
            boundaries.push(BoundaryEntry {
                shape: *s,
                dir: name,
            });
        }
        store::write_json(
            &dir.join(CHAIN_MANIFEST),
            &ChainManifest {
                format: "keynet-keychain".into(),
                alpha: self.alpha,
                seed: self.seed,
                output_public: self.output_public,
                boundaries,
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: ChainManifest = store::read_json(&dir.join(CHAIN_MANIFEST))?;
        let mut shapes = Vec::new();
        let mut keys = Vec::new();
        for b in m.boundaries {
            if b.dir.contains('/') || b.dir.contains('\\') || b.dir.starts_with('.') {
                return Err(Error::Format(format!("key dir `{}` escapes container", b.dir)));
            }
            shapes.push(b.shape);
            keys.push(KeyMatrix::load(&dir.join(&b.dir))?);
        }
        KeyChain::from_keys(shapes, keys, m.alpha, m.seed, m.output_public)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainManifest {
    format: String,
    alpha: usize,
    seed: u64,
    output_public: bool,
    boundaries: Vec<BoundaryEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundaryEntry {
    shape: Shape,
    dir: String,
}
