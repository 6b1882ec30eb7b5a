use crate::error::{Error, Result};
use crate::exec::{self, Exec};

/// Dense vector type used throughout the crate.
pub type DenseVector = Vec<f64>;

const MATVEC_CHUNK: usize = 256;
const MATMUL_CHUNK: usize = 64;

/// Sparse matrix holding row-major sorted `(row, col, value)` triplets with no
/// duplicate coordinates and no stored zeros. Row offsets are cached so
/// per-row kernels do not need to search.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CooMatrix {
    /// Builds a matrix from unordered triplets. Duplicate coordinates are
    /// summed in input order and exact zeros are dropped.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &t {
            if r >= rows || c >= cols {
                return Err(Error::shape(
                    "CooMatrix::from_triplets",
                    format!("index within {rows}x{cols}"),
                    format!("({r}, {c})"),
                ));
            }
        }
        t.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut rows_of = Vec::with_capacity(t.len());
        let mut i = 0;
        while i < t.len() {
            let (r, c, mut v) = t[i];
            i += 1;
            while i < t.len() && t[i].0 == r && t[i].1 == c {
                v += t[i].2;
                i += 1;
            }
            if v != 0.0 {
                rows_of.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        for &r in &rows_of {
            row_ptr[r + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(CooMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Assembles a matrix from per-row `(col, value)` lists that are already
    /// column-sorted and zero-free.
    pub(crate) fn from_sorted_rows(rows: usize, cols: usize, per_row: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert_eq!(per_row.len(), rows);
        let nnz = per_row.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in per_row {
            for (c, v) in row {
                debug_assert!(c < cols && v != 0.0);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CooMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub(crate) fn from_raw_parts(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        CooMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CooMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CooMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from a row-major dense buffer, skipping zeros.
    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "CooMatrix::from_dense",
                rows * cols,
                data.len(),
            ));
        }
        let per_row = (0..rows)
            .map(|r| {
                data[r * cols..(r + 1) * cols]
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        Ok(Self::from_sorted_rows(rows, cols, per_row))
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for (r, c, v) in self.entries() {
            out[r * self.cols + c] = v;
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of stored (nonzero) entries, i.e. the L0 norm.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    /// Triplets in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r >= self.rows {
            return 0.0;
        }
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    pub fn row_nnz(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| self.row_ptr[r + 1] - self.row_ptr[r])
            .collect()
    }

    pub fn col_nnz(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        counts
    }

    pub fn transpose(&self) -> CooMatrix {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.cols];
        for (r, c, v) in self.entries() {
            per_row[c].push((r, v));
        }
        Self::from_sorted_rows(self.cols, self.rows, per_row)
    }

    /// Leading `rows x cols` sub-block.
    pub fn leading_block(&self, rows: usize, cols: usize) -> CooMatrix {
        let rows = rows.min(self.rows);
        let cols = cols.min(self.cols);
        let per_row = (0..rows)
            .map(|r| {
                let (cs, vs) = self.row(r);
                cs.iter()
                    .zip(vs)
                    .take_while(|(c, _)| **c < cols)
                    .map(|(c, v)| (*c, *v))
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(rows, cols, per_row)
    }

    /// Bitwise equality of shape, structure and values.
    pub fn bit_eq(&self, other: &CooMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Elementwise map over stored values; results equal to zero are dropped.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CooMatrix {
        let per_row = (0..self.rows)
            .map(|r| {
                let (cs, vs) = self.row(r);
                cs.iter()
                    .zip(vs)
                    .map(|(&c, &v)| (c, f(v)))
                    .filter(|(_, v)| *v != 0.0)
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(self.rows, self.cols, per_row)
    }

    /// Sparse-dense product `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Result<DenseVector> {
        self.matvec_with(v, Exec::default())
    }

    /// Sparse-dense product with an explicit execution strategy. Each row is
    /// accumulated in ascending column order regardless of `exec`.
    pub fn matvec_with(&self, v: &[f64], exec: Exec) -> Result<DenseVector> {
        if v.len() != self.cols {
            return Err(Error::shape("matvec", self.cols, v.len()));
        }
        let chunks = exec::map_chunks(exec, self.rows, MATVEC_CHUNK, || (), |_, s, e| {
            (s..e).map(|r| self.row_dot(r, v)).collect::<Vec<_>>()
        });
        Ok(chunks.into_iter().flatten().collect())
    }

    #[inline]
    pub(crate) fn row_dot(&self, r: usize, v: &[f64]) -> f64 {
        let (cols, vals) = self.row(r);
        let mut acc = 0.0;
        for (&c, &a) in cols.iter().zip(vals) {
            acc += a * v[c];
        }
        acc
    }

    /// Sparse-sparse product `self * other`. Cancellation zeros are dropped.
    pub fn matmul(&self, other: &CooMatrix) -> Result<CooMatrix> {
        self.matmul_with(other, Exec::default())
    }

    /// Row-wise Gustavson product. For each output entry the partial products
    /// are summed in ascending inner index, matching a dense triple loop.
    pub fn matmul_with(&self, other: &CooMatrix, exec: Exec) -> Result<CooMatrix> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{} rows on the right operand", self.cols),
                other.rows,
            ));
        }
        let n_out = other.cols;
        let chunks = exec::map_chunks(
            exec,
            self.rows,
            MATMUL_CHUNK,
            || (vec![0.0f64; n_out], vec![false; n_out], Vec::<usize>::new()),
            |(acc, seen, touched), s, e| {
                let mut rows_out = Vec::with_capacity(e - s);
                for r in s..e {
                    let (a_cols, a_vals) = self.row(r);
                    for (&k, &a) in a_cols.iter().zip(a_vals) {
                        let (b_cols, b_vals) = other.row(k);
                        for (&j, &b) in b_cols.iter().zip(b_vals) {
                            if seen[j] {
                                acc[j] += a * b;
                            } else {
                                seen[j] = true;
                                acc[j] = a * b;
                                touched.push(j);
                            }
                        }
                    }
                    touched.sort_unstable();
                    let mut row = Vec::with_capacity(touched.len());
                    for &j in touched.iter() {
                        if acc[j] != 0.0 {
                            row.push((j, acc[j]));
                        }
                        seen[j] = false;
                    }
                    touched.clear();
                    rows_out.push(row);
                }
                rows_out
            },
        );
        let per_row = chunks.into_iter().flatten().collect();
        Ok(Self::from_sorted_rows(self.rows, other.cols, per_row))
    }

    /// Upper bound on `nnz(self * other)` from the sparsity structure alone:
    /// the sum over rows of `self` of the row lengths of `other` it touches,
    /// capped at the output width.
    pub fn matmul_fill_bound(&self, other: &CooMatrix) -> usize {
        let b_rows = other.row_nnz();
        (0..self.rows)
            .map(|r| {
                let (cols, _) = self.row(r);
                cols.iter()
                    .map(|&k| b_rows.get(k).copied().unwrap_or(0))
                    .sum::<usize>()
                    .min(other.cols)
            })
            .sum()
    }
}
