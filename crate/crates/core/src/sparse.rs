//! Compressed-sparse-row matrices and the kernels the operators need.
//!
//! Invariants maintained by every constructor: column indices strictly
//! increase within a row and no explicit zeros are stored.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dense::{axpy, DenseMatrix};
use crate::error::{Error, Result};
use crate::math;

/// Entries of a sparse-sparse product smaller than this in magnitude are
/// cancellation noise and are not stored.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// resulting zeros dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= n_rows {
                return Err(Error::IndexOutOfRange {
                    what: "row",
                    index: r,
                    bound: n_rows,
                });
            }
            if c >= n_cols {
                return Err(Error::IndexOutOfRange {
                    what: "column",
                    index: c,
                    bound: n_cols,
                });
            }
            sorted.push((r, c, v));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut idx = 0;
        while idx < sorted.len() {
            let (r, c, mut v) = sorted[idx];
            idx += 1;
            while idx < sorted.len() && sorted[idx].0 == r && sorted[idx].1 == c {
                v += sorted[idx].2;
                idx += 1;
            }
            if v != 0.0 {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |what: &'static str| Error::DimensionMismatch {
            op: what,
            expected: (n_rows, n_cols),
            got: (row_offsets.len(), col_indices.len()),
        };
        if row_offsets.len() != n_rows + 1
            || row_offsets[0] != 0
            || *row_offsets.last().unwrap() != col_indices.len()
            || col_indices.len() != values.len()
        {
            return Err(bad("SparseMatrix::from_csr"));
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(bad("SparseMatrix::from_csr offsets"));
            }
            for k in lo..hi {
                if col_indices[k] >= n_cols {
                    return Err(Error::IndexOutOfRange {
                        what: "column",
                        index: col_indices[k],
                        bound: n_cols,
                    });
                }
                if k > lo && col_indices[k] <= col_indices[k - 1] {
                    return Err(bad("SparseMatrix::from_csr ordering"));
                }
                if values[k] == 0.0 {
                    return Err(bad("SparseMatrix::from_csr explicit zero"));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut row_offsets = Vec::with_capacity(d.rows() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..d.rows() {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: d.rows(),
            n_cols: d.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        row_offsets.push(0);
        for (i, &v) in diag.iter().enumerate() {
            if v != 0.0 {
                col_indices.push(i);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets,
            col_indices,
            values,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.iter() {
            d.set(i, j, v);
        }
        d
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in increasing order, so each output row receives
        // increasing column indices.
        for (i, j, v) in self.iter() {
            let dst = next[j];
            col_indices[dst] = i;
            values[dst] = v;
            next[j] += 1;
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (_, j, v) in self.iter() {
            out[j] += v;
        }
        out
    }

    /// `diag(s) · self`. Rows scaled by zero become empty.
    pub fn scale_rows(&self, s: &[f64]) -> Result<Self> {
        if s.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                op: "scale_rows",
                expected: (self.n_rows, 1),
                got: (s.len(), 1),
            });
        }
        Ok(self.map_entries(|i, _, v| v * s[i]))
    }

    /// `self · diag(s)`.
    pub fn scale_cols(&self, s: &[f64]) -> Result<Self> {
        if s.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                op: "scale_cols",
                expected: (self.n_cols, 1),
                got: (s.len(), 1),
            });
        }
        Ok(self.map_entries(|_, j, v| v * s[j]))
    }

    /// Applies `f` to every stored entry, dropping entries that become zero.
    pub fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let nv = f(i, j, v);
                if nv != 0.0 {
                    col_indices.push(j);
                    values.push(nv);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// `alpha·self + beta·other` over the union of both patterns.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "linear_combination",
                expected: self.shape(),
                got: other.shape(),
            });
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        let mut push = |cols: &mut Vec<usize>, j: usize, v: f64| {
            if v != 0.0 {
                cols.push(j);
                values.push(v);
            }
        };
        for i in 0..self.n_rows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                if q == bc.len() || (p < ac.len() && ac[p] < bc[q]) {
                    push(&mut col_indices, ac[p], alpha * av[p]);
                    p += 1;
                } else if p == ac.len() || bc[q] < ac[p] {
                    push(&mut col_indices, bc[q], beta * bv[q]);
                    q += 1;
                } else {
                    push(&mut col_indices, ac[p], alpha * av[p] + beta * bv[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Sparse-sparse product (row-wise Gustavson with a dense accumulator).
    /// Entries with magnitude below [`PRUNE_THRESHOLD`] are dropped.
    pub fn matmul_sparse(&self, other: &Self) -> Result<Self> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch {
                op: "matmul_sparse",
                expected: (self.n_cols, other.n_cols),
                got: other.shape(),
            });
        }
        let n = other.n_cols;
        let mut acc = vec![0.0; n];
        let mut seen = vec![usize::MAX; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n_rows {
            touched.clear();
            let (ac, av) = self.row(i);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if seen[j] != i {
                        seen[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                let v = acc[j];
                if math::abs(v) >= PRUNE_THRESHOLD {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Sparse times dense.
    pub fn spmm(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != d.rows() {
            return Err(Error::DimensionMismatch {
                op: "spmm",
                expected: (self.n_cols, d.cols()),
                got: d.shape(),
            });
        }
        let mut out = DenseMatrix::zeros(self.n_rows, d.cols());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let dst = out.row_mut(i);
            for (&j, &v) in cols.iter().zip(vals) {
                axpy(v, d.row(j), dst);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · d` by scattering rows, without building the transpose.
    pub fn spmm_transpose(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != d.rows() {
            return Err(Error::DimensionMismatch {
                op: "spmm_transpose",
                expected: (self.n_rows, d.cols()),
                got: d.shape(),
            });
        }
        let mut out = DenseMatrix::zeros(self.n_cols, d.cols());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let src = d.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                axpy(v, src, out.row_mut(j));
            }
        }
        Ok(out)
    }

    /// Maximum `|a_ij − a_ji|`; infinite for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        match self.linear_combination(1.0, &t, -1.0) {
            Ok(diff) => diff.values.iter().map(|v| math::abs(*v)).fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        }
    }

    /// Relabels rows and columns: entry `(i, j)` moves to
    /// `(row_perm[i], col_perm[j])`. `None` keeps that axis.
    pub fn permute(&self, row_perm: Option<&[usize]>, col_perm: Option<&[usize]>) -> Self {
        let triplets: Vec<_> = self
            .iter()
            .map(|(i, j, v)| {
                (
                    row_perm.map_or(i, |p| p[i]),
                    col_perm.map_or(j, |p| p[j]),
                    v,
                )
            })
            .collect();
        Self::from_triplets(self.n_rows, self.n_cols, &triplets)
            .expect("permutation preserves bounds")
    }
}
