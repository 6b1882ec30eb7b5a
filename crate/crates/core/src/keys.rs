//! Generalized doubly stochastic keys.
//!
//! A key is `A = D * P * S` augmented with an optional nonnegative bias
//! column, where `D` is a positive diagonal gain, `P` a global permutation
//! and `S = blockdiag(theta * I + (1 - theta) * mean(P_1..P_alpha))` a block
//! diagonal soft shuffle with blocks of size `alpha`. Each block is strictly
//! diagonally dominant, so it is invertible by direct elimination and the
//! inverse `S^-1 * P^T * D^-1` keeps at most `alpha` nonzeros per row and
//! column.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};
use crate::rng::{self, KeyRng};
use crate::sparsekit::{CooMatrix, DenseVector};
use crate::store::{self, BlobRef};

pub const DEFAULT_GAIN_RANGE: (f64, f64) = (0.5, 2.0);
pub const DEFAULT_BIAS_RANGE: (f64, f64) = (0.0, 1.0);
pub const DEFAULT_DOMINANCE_RANGE: (f64, f64) = (0.55, 0.95);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyGenConfig {
    pub dim: usize,
    pub alpha: usize,
    pub seed: u64,
    pub gain_range: (f64, f64),
    pub has_bias: bool,
    pub bias_range: (f64, f64),
    pub dominance_range: (f64, f64),
    /// When false every permutation is the identity (debug keys).
    pub shuffle: bool,
}

impl KeyGenConfig {
    pub fn new(dim: usize, alpha: usize, seed: u64) -> Self {
        KeyGenConfig {
            dim,
            alpha,
            seed,
            gain_range: DEFAULT_GAIN_RANGE,
            has_bias: true,
            bias_range: DEFAULT_BIAS_RANGE,
            dominance_range: DEFAULT_DOMINANCE_RANGE,
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = |m: String| Err(Error::Parameter(m));
        if self.dim == 0 {
            return p("key dimension must be at least 1".into());
        }
        if self.alpha == 0 || self.alpha > self.dim {
            return p(format!("alpha must be in 1..={}, got {}", self.dim, self.alpha));
        }
        let (glo, ghi) = self.gain_range;
        if !(glo > 0.0 && glo.is_finite() && ghi.is_finite() && ghi >= glo) {
            return p(format!("gain range must satisfy 0 < lo <= hi, got [{glo}, {ghi}]"));
        }
        let (tlo, thi) = self.dominance_range;
        if !(tlo > 0.5 && thi < 1.0 && tlo <= thi) {
            return p(format!("dominance range must lie inside (0.5, 1), got [{tlo}, {thi}]"));
        }
        if self.has_bias {
            let (blo, bhi) = self.bias_range;
            if !(blo >= 0.0 && bhi.is_finite() && bhi >= blo) {
                return p(format!("bias range must satisfy 0 <= lo <= hi, got [{blo}, {bhi}]"));
            }
        }
        Ok(())
    }
}

/// A key together with its analytically paired inverse, both stored in
/// affine-augmented `(dim + 1) x (dim + 1)` form.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyMatrix {
    dim: usize,
    alpha: usize,
    seed: u64,
    has_bias: bool,
    forward: CooMatrix,
    inverse: CooMatrix,
}

fn sample_range(rng: &mut KeyRng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn random_permutation(rng: &mut KeyRng, n: usize, shuffle: bool) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    if shuffle {
        p.shuffle(rng);
    }
    p
}

/// Dense block `theta * I + (1 - theta) / alpha * sum_j P_j` of side `m`.
fn soft_block(rng: &mut KeyRng, m: usize, alpha: usize, dominance: (f64, f64), shuffle: bool) -> Vec<f64> {
    let mut b = vec![0.0; m * m];
    if m == 1 || !shuffle {
        for i in 0..m {
            b[i * m + i] = 1.0;
        }
        return b;
    }
    let theta = sample_range(rng, dominance);
    let w = (1.0 - theta) / alpha as f64;
    for i in 0..m {
        b[i * m + i] = theta;
    }
    for _ in 0..alpha {
        let p = random_permutation(rng, m, true);
        for (i, &j) in p.iter().enumerate() {
            b[i * m + j] += w;
        }
    }
    b
}

/// Generates a key from `cfg`. The result is a pure function of `cfg`.
pub fn gen_key(cfg: &KeyGenConfig) -> Result<KeyMatrix> {
    cfg.validate()?;
    let n = cfg.dim;
    let alpha = cfg.alpha;

    let perm = random_permutation(&mut rng::split(cfg.seed, "permutation", 0), n, cfg.shuffle);
    let mut gain_rng = rng::split(cfg.seed, "gain", 0);
    let gains: Vec<f64> = (0..n).map(|_| sample_range(&mut gain_rng, cfg.gain_range)).collect();
    let bias: Vec<f64> = if cfg.has_bias {
        let mut r = rng::split(cfg.seed, "bias", 0);
        (0..n).map(|_| sample_range(&mut r, cfg.bias_range)).collect()
    } else {
        vec![0.0; n]
    };

    // S and S^-1, row by row.
    let mut s_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut s_inv_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for (b, start) in (0..n).step_by(alpha).enumerate() {
        let m = alpha.min(n - start);
        let mut block_rng = rng::split(cfg.seed, "block", b as u64);
        let block = soft_block(&mut block_rng, m, alpha, cfg.dominance_range, cfg.shuffle);
        let inv = dense::invert(m, &block)?;
        for i in 0..m {
            let nz = |src: &[f64]| {
                (0..m)
                    .filter(|&j| src[i * m + j] != 0.0)
                    .map(|j| (start + j, src[i * m + j]))
                    .collect::<Vec<_>>()
            };
            s_rows.push(nz(&block));
            s_inv_rows.push(nz(&inv));
        }
    }

    // forward row i = gain_i * S[perm[i], :], plus bias.
    let mut fwd_rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = s_rows[perm[i]]
                .iter()
                .map(|&(c, v)| (c, gains[i] * v))
                .filter(|(_, v)| *v != 0.0)
                .collect();
            if bias[i] != 0.0 {
                row.push((n, bias[i]));
            }
            row
        })
        .collect();
    fwd_rows.push(vec![(n, 1.0)]);
    let forward = CooMatrix::from_sorted_rows(n + 1, n + 1, fwd_rows);

    // inverse[i, l] = S^-1[i, perm[l]] / gain_l
    let mut inv_perm = vec![0usize; n];
    for (l, &k) in perm.iter().enumerate() {
        inv_perm[k] = l;
    }
    let recip: Vec<f64> = gains.iter().map(|g| 1.0 / g).collect();
    let mut inv_rows: Vec<Vec<(usize, f64)>> = s_inv_rows
        .iter()
        .map(|row| {
            let mut out: Vec<(usize, f64)> = row
                .iter()
                .map(|&(k, v)| {
                    let l = inv_perm[k];
                    (l, v * recip[l])
                })
                .filter(|(_, v)| *v != 0.0)
                .collect();
            out.sort_unstable_by_key(|&(c, _)| c);
            out
        })
        .collect();
    if cfg.has_bias {
        for row in inv_rows.iter_mut() {
            let mut acc = 0.0;
            for &(c, v) in row.iter() {
                acc += v * bias[c];
            }
            if acc != 0.0 {
                row.push((n, -acc));
            }
        }
    }
    inv_rows.push(vec![(n, 1.0)]);
    let inverse = CooMatrix::from_sorted_rows(n + 1, n + 1, inv_rows);

    Ok(KeyMatrix {
        dim: n,
        alpha,
        seed: cfg.seed,
        has_bias: cfg.has_bias,
        forward,
        inverse,
    })
}

/// Scaled-permutation key without bias, as required wherever a ReLU follows.
pub fn gen_relu_key(dim: usize, seed: u64, gain_range: (f64, f64)) -> Result<KeyMatrix> {
    gen_key(&KeyGenConfig {
        gain_range,
        has_bias: false,
        ..KeyGenConfig::new(dim, 1, seed)
    })
}

impl KeyMatrix {
    pub fn identity(dim: usize) -> Self {
        KeyMatrix {
            dim,
            alpha: 1,
            seed: 0,
            has_bias: false,
            forward: CooMatrix::identity(dim + 1),
            inverse: CooMatrix::identity(dim + 1),
        }
    }

    /// Reassembles a key from stored matrices, checking shapes and the
    /// homogeneous row.
    pub fn from_parts(
        dim: usize,
        alpha: usize,
        seed: u64,
        has_bias: bool,
        forward: CooMatrix,
        inverse: CooMatrix,
    ) -> Result<Self> {
        for (name, m) in [("forward", &forward), ("inverse", &inverse)] {
            if m.rows() != dim + 1 || m.cols() != dim + 1 {
                return Err(Error::shape(
                    "KeyMatrix::from_parts",
                    format!("{0}x{0}", dim + 1),
                    format!("{name} {}x{}", m.rows(), m.cols()),
                ));
            }
            let (c, v) = m.row(dim);
            if c != [dim] || v != [1.0] {
                return Err(Error::Contract(format!("{name} last row is not [0 ... 0 1]")));
            }
        }
        Ok(KeyMatrix {
            dim,
            alpha,
            seed,
            has_bias,
            forward,
            inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn alpha(&self) -> usize {
        self.alpha
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn has_bias(&self) -> bool {
        self.has_bias
    }
    pub fn forward(&self) -> &CooMatrix {
        &self.forward
    }
    pub fn inverse(&self) -> &CooMatrix {
        &self.inverse
    }

    fn check_homogeneous(&self, v: &[f64], context: &'static str) -> Result<()> {
        if v.len() != self.dim + 1 {
            return Err(Error::shape(context, self.dim + 1, v.len()));
        }
        if v[self.dim] != 1.0 {
            return Err(Error::Contract(format!(
                "{context}: homogeneous coordinate is {}, expected 1",
                v[self.dim]
            )));
        }
        Ok(())
    }

    /// `forward * v` for a homogeneous vector `[x; 1]`.
    pub fn apply(&self, v: &[f64]) -> Result<DenseVector> {
        self.check_homogeneous(v, "key_apply")?;
        self.forward.matvec(v)
    }

    /// `inverse * v` for a homogeneous vector.
    pub fn unapply(&self, v: &[f64]) -> Result<DenseVector> {
        self.check_homogeneous(v, "key_unapply")?;
        self.inverse.matvec(v)
    }

    /// Non-augmented block times `x`, ignoring the bias.
    pub fn linear_apply(&self, x: &[f64]) -> Result<DenseVector> {
        linear_part(&self.forward, self.dim, x)
    }

    /// Non-augmented block of the inverse times `y`.
    pub fn linear_unapply(&self, y: &[f64]) -> Result<DenseVector> {
        linear_part(&self.inverse, self.dim, y)
    }

    /// True when every row and column of the non-augmented block holds
    /// exactly one positive entry and the bias column is empty.
    pub fn is_scaled_permutation(&self) -> bool {
        self.has_permutation_block() && self.bias().iter().all(|&b| b == 0.0)
    }

    /// Like [`is_scaled_permutation`](Self::is_scaled_permutation) but
    /// allows a bias.
    pub fn has_permutation_block(&self) -> bool {
        let block = self.forward.leading_block(self.dim, self.dim);
        block.nnz() == self.dim
            && block.row_nnz().iter().all(|&c| c == 1)
            && block.col_nnz().iter().all(|&c| c == 1)
            && block.values().iter().all(|&v| v > 0.0)
    }

    /// Bias column of the forward key.
    pub fn bias(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.forward.get(r, self.dim)).collect()
    }

    /// Hex SHA-256 of the forward `KSPM` blob. Identifies the key without
    /// revealing it.
    pub fn fingerprint(&self) -> String {
        store::sha256_hex(&self.forward.to_kspm_bytes())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = KeyManifest {
            dim: self.dim,
            alpha: self.alpha,
            seed: self.seed,
            has_bias: self.has_bias,
            forward: BlobRef::write(dir, "forward.kspm", &self.forward.to_kspm_bytes())?,
            inverse: BlobRef::write(dir, "inverse.kspm", &self.inverse.to_kspm_bytes())?,
        };
        store::write_json(&dir.join(KEY_MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: KeyManifest = store::read_json(&dir.join(KEY_MANIFEST))?;
        let forward = CooMatrix::from_kspm_bytes(&m.forward.read(dir)?)?;
        let inverse = CooMatrix::from_kspm_bytes(&m.inverse.read(dir)?)?;
        KeyMatrix::from_parts(m.dim, m.alpha, m.seed, m.has_bias, forward, inverse)
    }
}

pub const KEY_MANIFEST: &str = "key.json";

/// JSON manifest of a key directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyManifest {
    pub dim: usize,
    pub alpha: usize,
    pub seed: u64,
    pub has_bias: bool,
    pub forward: BlobRef,
    pub inverse: BlobRef,
}

fn linear_part(m: &CooMatrix, dim: usize, x: &[f64]) -> Result<DenseVector> {
    if x.len() != dim {
        return Err(Error::shape("key linear part", dim, x.len()));
    }
    Ok((0..dim)
        .map(|r| {
            let (cols, vals) = m.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c < dim {
                    acc += v * x[c];
                }
            }
            acc
        })
        .collect())
}
