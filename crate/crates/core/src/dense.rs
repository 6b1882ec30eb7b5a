//! Small dense linear-algebra helpers (row-major buffers).

use crate::error::{Error, Result};

/// Relative pivot threshold below which a matrix is declared singular.
const PIVOT_EPS: f64 = 1e-13;

/// Inverts the `n x n` row-major matrix `a` by Gauss-Jordan elimination with
/// partial pivoting.
pub fn invert(n: usize, a: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut work = a.to_vec();
    solve_in_place(n, &mut work, &mut inv, n)?;
    Ok(inv)
}

/// Solves `A X = B` for `X`, where `A` is `n x n` and `B` is `n x m`, both
/// row-major. `a` is destroyed and `b` is overwritten with `X`.
pub fn solve_in_place(n: usize, a: &mut [f64], b: &mut [f64], m: usize) -> Result<()> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * m);
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 && n > 0 {
        return Err(Error::SingularSystem("zero matrix".into()));
    }
    for col in 0..n {
        let (piv, pmax) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= PIVOT_EPS * scale {
            return Err(Error::SingularSystem(format!(
                "pivot {pmax:e} in column {col} below tolerance"
            )));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            for k in 0..m {
                b.swap(piv * m + k, col * m + k);
            }
        }
        let p = a[col * n + col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            for k in 0..m {
                b[r * m + k] -= f * b[col * m + k];
            }
        }
    }
    for r in 0..n {
        let p = a[r * n + r];
        for k in 0..m {
            b[r * m + k] /= p;
        }
    }
    Ok(())
}
