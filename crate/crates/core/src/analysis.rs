//! Privacy analysis: chosen-plaintext key recovery, the elementwise
//! nonnegative split, and SSIM.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};
use crate::exec::{map_range, Exec};
use crate::keys::KeyMatrix;
use crate::netir::Tensor3;
use crate::rng;
use crate::sparsekit::CooMatrix;

/// Fresh random probes used to score a recovered key.
const HELD_OUT_PROBES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Probes {
    /// `[0; 1]` followed by `[e_i; 1]` for every `i`.
    Basis,
    /// `n` uniform random probes, solved by least squares.
    Random { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Recovered affine-augmented key.
    pub recovered: CooMatrix,
    pub probes: usize,
    /// Max of `|A_hat x - A x|_2 / |A x|_2` over held-out probes.
    pub residual: f64,
    pub success: bool,
}

/// Wraps a key as a chosen-plaintext oracle on homogeneous vectors.
pub fn key_oracle(key: &KeyMatrix) -> impl Fn(&[f64]) -> Result<Vec<f64>> + '_ {
    move |x| key.apply(x)
}

fn probe(dim: usize, x: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = x.into_iter().collect();
    debug_assert_eq!(v.len(), dim);
    v.push(1.0);
    v
}

fn random_probe(r: &mut impl Rng, dim: usize) -> Vec<f64> {
    probe(dim, (0..dim).map(|_| r.random::<f64>()))
}

/// Recovers the affine map behind `oracle`, which takes and returns
/// homogeneous vectors of length `dim + 1`.
pub fn chosen_plaintext_attack<F>(oracle: F, dim: usize, probes: Probes, seed: u64, tol: f64) -> Result<AttackResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let call = |x: &[f64]| -> Result<Vec<f64>> {
        let y = oracle(x)?;
        if y.len() != dim + 1 {
            return Err(Error::shape("attack oracle output", dim + 1, y.len()));
        }
        Ok(y)
    };
    // Row-major dim x (dim + 1) estimate of [A b].
    let mut est = vec![0.0; dim * (dim + 1)];
    let used = match probes {
        Probes::Basis => {
            let bias = call(&probe(dim, std::iter::repeat_n(0.0, dim)))?;
            for r in 0..dim {
                est[r * (dim + 1) + dim] = bias[r];
            }
            for i in 0..dim {
                let y = call(&probe(dim, (0..dim).map(|k| if k == i { 1.0 } else { 0.0 })))?;
                for r in 0..dim {
                    est[r * (dim + 1) + i] = y[r] - bias[r];
                }
            }
            dim + 1
        }
        Probes::Random { n } => {
            if n < dim + 1 {
                return Err(Error::SingularSystem(format!(
                    "{n} probes cannot determine {} unknowns per row",
                    dim + 1
                )));
            }
            let m = dim + 1;
            let mut r = rng::split(seed, "attack-probes", 0);
            let mut xtx = vec![0.0; m * m];
            let mut xty = vec![0.0; m * dim];
            for _ in 0..n {
                let x = random_probe(&mut r, dim);
                let y = call(&x)?;
                for a in 0..m {
                    for b in 0..m {
                        xtx[a * m + b] += x[a] * x[b];
                    }
                    for c in 0..dim {
                        xty[a * dim + c] += x[a] * y[c];
                    }
                }
            }
            dense::solve_in_place(m, &mut xtx, &mut xty, dim)?;
            // xty now holds [A b]^T
            for row in 0..dim {
                for col in 0..m {
                    est[row * m + col] = xty[col * dim + row];
                }
            }
            n
        }
    };
    let mut triplets: Vec<(usize, usize, f64)> = est
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(k, &v)| (k / (dim + 1), k % (dim + 1), v))
        .collect();
    triplets.push((dim, dim, 1.0));
    let recovered = CooMatrix::from_triplets(dim + 1, dim + 1, triplets)?;
    let mut r = rng::split(seed, "attack-holdout", 0);
    let mut residual = 0.0f64;
    for _ in 0..HELD_OUT_PROBES {
        let x = random_probe(&mut r, dim);
        let want = call(&x)?;
        let got = recovered.matvec(&x)?;
        let err: f64 = want[..dim].iter().zip(&got).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = want[..dim].iter().map(|a| a * a).sum::<f64>().sqrt();
        residual = residual.max(if norm > 0.0 { err / norm } else { err });
    }
    Ok(AttackResult {
        recovered,
        probes: used,
        residual,
        success: residual <= tol,
    })
}

/// Splits `b` into `(B_p, B_n)`, both nonnegative with disjoint supports,
/// such that `B = B_p - B_n`.
pub fn nonneg_split(b: &CooMatrix) -> (CooMatrix, CooMatrix) {
    (b.map_values(|v| v.max(0.0)), b.map_values(|v| (-v).max(0.0)))
}

/// Windowed SSIM settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Side of the square window; must be odd.
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
    pub dynamic_range: f64,
}

impl SsimParams {
    /// `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` with a 7x7 window.
    pub fn standard(dynamic_range: f64) -> Self {
        SsimParams {
            window: 7,
            c1: (0.01 * dynamic_range).powi(2),
            c2: (0.03 * dynamic_range).powi(2),
            dynamic_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) {
            return Err(Error::Parameter(format!("SSIM window {} must be odd", self.window)));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::Parameter("SSIM constants must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams::standard(1.0)
    }
}

/// Mean SSIM over all fully contained windows of every channel, clamped to
/// `[0, 1]`. Images smaller than the window use the largest odd window
/// that fits.
pub fn ssim(a: &Tensor3, b: &Tensor3, p: &SsimParams) -> Result<f64> {
    p.validate()?;
    if a.shape != b.shape {
        return Err(Error::shape("ssim", a.shape, b.shape));
    }
    let s = a.shape;
    if s.is_empty() {
        return Err(Error::Parameter("ssim of an empty image".into()));
    }
    let fit = s.height.min(s.width);
    let k = p.window.min(if fit % 2 == 1 { fit } else { fit - 1 });
    let (ny, nx) = (s.height - k + 1, s.width - k + 1);
    let inv = 1.0 / (k * k) as f64;
    let rows = map_range(Exec::default(), s.channels * ny, |cy| {
        let (c, y) = (cy / ny, cy % ny);
        let at = |img: &Tensor3, yy: usize, xx: usize| img.data[(c * s.height + yy) * s.width + xx];
        let mut acc = 0.0;
        for x in 0..nx {
            let (mut ma, mut mb) = (0.0, 0.0);
            for dy in 0..k {
                for dx in 0..k {
                    ma += at(a, y + dy, x + dx);
                    mb += at(b, y + dy, x + dx);
                }
            }
            ma *= inv;
            mb *= inv;
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..k {
                for dx in 0..k {
                    let da = at(a, y + dy, x + dx) - ma;
                    let db = at(b, y + dy, x + dx) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va * inv, vb * inv, cov * inv);
            acc += ((2.0 * ma * mb + p.c1) * (2.0 * cov + p.c2)) / ((ma * ma + mb * mb + p.c1) * (va + vb + p.c2));
        }
        acc
    });
    let mean = rows.iter().sum::<f64>() / (s.channels * ny * nx) as f64;
    Ok(mean.clamp(0.0, 1.0))
}
