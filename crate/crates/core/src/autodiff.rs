//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] owns every value produced during a forward pass. Operations
//! are recorded in execution order, which is a topological order, and
//! [`Tape::backward`] walks them once in exact reverse. Sparse structure
//! (transition operators, incidence patterns) enters as fixed data shared
//! through `Arc`; only dense values and the values stored on an incidence
//! pattern are differentiated.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::dense::{axpy, dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::uniform01;
use crate::sparse::SparseMatrix;
use crate::transition::Normalization;

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparsity pattern of an incidence-like matrix with per-entry bookkeeping
/// for both row-wise and column-wise traversal. Entry `k` follows CSR order.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidencePattern {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    entry_rows: Vec<usize>,
    entry_cols: Vec<usize>,
    col_offsets: Vec<usize>,
    col_entries: Vec<usize>,
}

impl IncidencePattern {
    pub fn from_sparse(m: &SparseMatrix) -> Self {
        let mut entry_rows = Vec::with_capacity(m.nnz());
        for i in 0..m.n_rows() {
            entry_rows.extend(core::iter::repeat(i).take(m.row(i).0.len()));
        }
        let entry_cols = m.col_indices().to_vec();
        let mut col_offsets = vec![0usize; m.n_cols() + 1];
        for &c in &entry_cols {
            col_offsets[c + 1] += 1;
        }
        for c in 0..m.n_cols() {
            col_offsets[c + 1] += col_offsets[c];
        }
        let mut next = col_offsets.clone();
        let mut col_entries = vec![0usize; m.nnz()];
        for (k, &c) in entry_cols.iter().enumerate() {
            col_entries[next[c]] = k;
            next[c] += 1;
        }
        Self {
            n_rows: m.n_rows(),
            n_cols: m.n_cols(),
            row_offsets: m.row_offsets().to_vec(),
            entry_rows,
            entry_cols,
            col_offsets,
            col_entries,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.entry_cols.len()
    }

    /// CSR row offsets, which double as the softmax segments.
    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn entry_rows(&self) -> &[usize] {
        &self.entry_rows
    }

    pub fn entry_cols(&self) -> &[usize] {
        &self.entry_cols
    }

    fn row_entries(&self, i: usize) -> core::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    fn col_entries(&self, e: usize) -> &[usize] {
        &self.col_entries[self.col_offsets[e]..self.col_offsets[e + 1]]
    }

    /// Sparse matrix with this pattern and the given entry values; zero
    /// values are dropped.
    pub fn to_sparse(&self, values: &[f64]) -> SparseMatrix {
        let triplets: Vec<_> = (0..self.nnz())
            .map(|k| (self.entry_rows[k], self.entry_cols[k], values[k]))
            .collect();
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
            .expect("pattern indices are in range")
    }
}

enum Op {
    MatMul(Var, Var),
    SparseApply {
        op: Arc<SparseMatrix>,
        x: Var,
    },
    Add(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Elu(Var),
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Dropout {
        x: Var,
        keep: Vec<bool>,
        scale: f64,
    },
    SegmentSoftmax {
        scores: Var,
        offsets: Arc<Vec<usize>>,
    },
    GatherSum {
        u: Var,
        v: Var,
        u_index: Arc<Vec<usize>>,
        v_index: Arc<Vec<usize>>,
    },
    AttentionApply {
        values: Var,
        pattern: Arc<IncidencePattern>,
        z: Var,
    },
    IncidencePropagate(PropagateCache),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        labels: Arc<Vec<usize>>,
        mask: Arc<Vec<usize>>,
        probs: DenseMatrix,
    },
}

struct PropagateCache {
    values: Var,
    z: Var,
    pattern: Arc<IncidencePattern>,
    weights: Arc<Vec<f64>>,
    alpha: f64,
    beta: f64,
    vertex_deg: Vec<f64>,
    edge_deg: Vec<f64>,
    z_scaled: DenseMatrix,
    r: DenseMatrix,
    s: DenseMatrix,
}

struct Node {
    out: Var,
    op: Op,
}

/// Counts reported by a backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardStats {
    pub nodes_visited: usize,
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Arc<DenseMatrix>>,
    grads: Vec<Option<DenseMatrix>>,
    needs_grad: Vec<bool>,
    leaf_requires_grad: Vec<bool>,
    nodes: Vec<Node>,
    backward_done: bool,
}

fn mismatch(op: &'static str, expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::DimensionMismatch { op, expected, got }
}

#[inline]
fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        math::expm1(x)
    }
}

/// `d^{-p}` for a positive degree, zero otherwise.
#[inline]
fn inv_pow(d: f64, p: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else if p == 1.0 {
        1.0 / d
    } else if p == 0.5 {
        1.0 / math::sqrt(d)
    } else if p == 0.0 {
        1.0
    } else {
        libm::pow(d, -p)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: DenseMatrix, needs_grad: bool) -> Var {
        self.values.push(Arc::new(value));
        self.grads.push(None);
        self.needs_grad.push(needs_grad);
        self.leaf_requires_grad.push(false);
        Var(self.values.len() - 1)
    }

    fn record(&mut self, value: DenseMatrix, inputs: &[Var], op: Op) -> Var {
        let needs = inputs.iter().any(|v| self.needs_grad[v.0]);
        let out = self.push(value, needs);
        self.nodes.push(Node { out, op });
        out
    }

    /// Trainable leaf; its gradient is available after [`Tape::backward`].
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        let v = self.push(value, true);
        self.leaf_requires_grad[v.0] = true;
        v
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, false)
    }

    /// Constant leaf sharing storage with the caller.
    pub fn constant_shared(&mut self, value: Arc<DenseMatrix>) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.needs_grad.push(false);
        self.leaf_requires_grad.push(false);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads[v.0].as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.leaf_requires_grad[v.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears gradients so that backward may run again.
    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
        self.backward_done = false;
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.record(value, &[a, b], Op::MatMul(a, b)))
    }

    /// `op · x` for a fixed sparse operator.
    pub fn sparse_apply(&mut self, op: &Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let value = op.spmm(self.value(x))?;
        Ok(self.record(
            value,
            &[x],
            Op::SparseApply {
                op: Arc::clone(op),
                x,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.record(value, &[a, b], Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).scale(c);
        self.record(value, &[x], Op::Scale(x, c))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Config("concat of nothing".into()))?;
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let shape = self.value(p).shape();
            if shape.0 != rows {
                return Err(mismatch("concat_cols", (rows, shape.1), shape));
            }
            cols += shape.1;
        }
        let mut out = DenseMatrix::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(i);
                out.row_mut(i)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.record(out, parts, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows `start..start + len` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if start + len > src.rows() {
            return Err(mismatch("slice_rows", (start + len, src.cols()), src.shape()));
        }
        let cols = src.cols();
        let data = src.as_slice()[start * cols..(start + len) * cols].to_vec();
        let value = DenseMatrix::new(len, cols, data)?;
        Ok(self.record(value, &[x], Op::SliceRows { x, start }))
    }

    /// Columns `start..start + len` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if start + len > src.cols() {
            return Err(mismatch("slice_cols", (src.rows(), start + len), src.shape()));
        }
        let value = DenseMatrix::from_fn(src.rows(), len, |i, j| src.get(i, start + j));
        Ok(self.record(value, &[x], Op::SliceCols { x, start }))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(elu);
        self.record(value, &[x], Op::Elu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self
            .value(x)
            .map(|v| if v > 0.0 { v } else { slope * v });
        self.record(value, &[x], Op::LeakyRelu { x, slope })
    }

    /// Inverted dropout: kept entries are scaled by `1/(1 − rate)`. Returns
    /// `x` unchanged when not training or when `rate == 0`.
    ///
    /// For inputs that carry gradients every entry gets a draw; for constant
    /// inputs only nonzero entries do, since a dropped zero is still zero.
    pub fn dropout(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut impl RngCore,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(alloc::format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - rate);
        let every_entry = self.needs_grad[x.0];
        let src = self.value(x);
        let mut keep = vec![false; src.as_slice().len()];
        let mut out = DenseMatrix::zeros(src.rows(), src.cols());
        for (k, (&v, o)) in src.as_slice().iter().zip(out.as_mut_slice()).enumerate() {
            if v == 0.0 && !every_entry {
                continue;
            }
            if uniform01(rng) >= rate {
                keep[k] = true;
                *o = v * scale;
            }
        }
        Ok(self.record(out, &[x], Op::Dropout { x, keep, scale }))
    }

    /// Softmax within each segment `offsets[s]..offsets[s+1]` of a column
    /// vector, shifted by the segment maximum before exponentiation.
    pub fn segment_softmax(&mut self, scores: Var, offsets: &Arc<Vec<usize>>) -> Result<Var> {
        let src = self.value(scores);
        let n = *offsets.last().unwrap_or(&0);
        if src.cols() != 1 || src.rows() != n {
            return Err(mismatch("segment_softmax", (n, 1), src.shape()));
        }
        let s = src.as_slice();
        let mut out = vec![0.0; n];
        for seg in 0..offsets.len() - 1 {
            let (lo, hi) = (offsets[seg], offsets[seg + 1]);
            if lo == hi {
                return Err(Error::EmptySegment(seg));
            }
            let max = s[lo..hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in lo..hi {
                out[k] = math::exp(s[k] - max);
                total += out[k];
            }
            for v in &mut out[lo..hi] {
                *v /= total;
            }
        }
        Ok(self.record(
            DenseMatrix::column(out),
            &[scores],
            Op::SegmentSoftmax {
                scores,
                offsets: Arc::clone(offsets),
            },
        ))
    }

    /// `out[k] = u[u_index[k]] + v[v_index[k]]` for column vectors `u`, `v`.
    pub fn gather_sum(
        &mut self,
        u: Var,
        v: Var,
        u_index: &Arc<Vec<usize>>,
        v_index: &Arc<Vec<usize>>,
    ) -> Result<Var> {
        let (uv, vv) = (self.value(u), self.value(v));
        if uv.cols() != 1 || vv.cols() != 1 || u_index.len() != v_index.len() {
            return Err(mismatch("gather_sum", (u_index.len(), 1), (v_index.len(), uv.cols())));
        }
        let mut out = Vec::with_capacity(u_index.len());
        for (&a, &b) in u_index.iter().zip(v_index.iter()) {
            if a >= uv.rows() || b >= vv.rows() {
                return Err(Error::IndexOutOfRange {
                    what: "gather index",
                    index: a.max(b),
                    bound: uv.rows().min(vv.rows()),
                });
            }
            out.push(uv.as_slice()[a] + vv.as_slice()[b]);
        }
        Ok(self.record(
            DenseMatrix::column(out),
            &[u, v],
            Op::GatherSum {
                u,
                v,
                u_index: Arc::clone(u_index),
                v_index: Arc::clone(v_index),
            },
        ))
    }

    fn check_pattern_inputs(
        &self,
        op: &'static str,
        values: Var,
        pattern: &IncidencePattern,
        z: Var,
        z_rows: usize,
    ) -> Result<()> {
        let vs = self.value(values).shape();
        if vs != (pattern.nnz(), 1) {
            return Err(mismatch(op, (pattern.nnz(), 1), vs));
        }
        let zs = self.value(z).shape();
        if zs.0 != z_rows {
            return Err(mismatch(op, (z_rows, zs.1), zs));
        }
        Ok(())
    }

    /// `Y = A · Z` where `A` has the given pattern and entry values.
    pub fn attention_apply(
        &mut self,
        values: Var,
        pattern: &Arc<IncidencePattern>,
        z: Var,
    ) -> Result<Var> {
        self.check_pattern_inputs("attention_apply", values, pattern, z, pattern.n_cols())?;
        let h = self.value(values).as_slice();
        let zv = self.value(z);
        let mut out = DenseMatrix::zeros(pattern.n_rows(), zv.cols());
        for i in 0..pattern.n_rows() {
            for k in pattern.row_entries(i) {
                axpy(h[k], zv.row(pattern.entry_cols[k]), out.row_mut(i));
            }
        }
        Ok(self.record(
            out,
            &[values, z],
            Op::AttentionApply {
                values,
                pattern: Arc::clone(pattern),
                z,
            },
        ))
    }

    /// Hypergraph propagation `Y = D^{-a} H W B^{-1} Hᵀ D^{-b} Z` where the
    /// incidence `H` carries the (differentiable) entry `values`, and `D`,
    /// `B` are recomputed from those values. `(a, b)` is `(1, 0)` for the
    /// row-normalized form and `(½, ½)` for the symmetric one.
    ///
    /// A vertex whose entries are all zero gets a zero output row, and a
    /// hyperedge with zero degree propagates nothing.
    pub fn incidence_propagate(
        &mut self,
        values: Var,
        pattern: &Arc<IncidencePattern>,
        weights: &Arc<Vec<f64>>,
        z: Var,
        normalization: Normalization,
    ) -> Result<Var> {
        self.check_pattern_inputs("incidence_propagate", values, pattern, z, pattern.n_rows())?;
        if weights.len() != pattern.n_cols() {
            return Err(mismatch(
                "incidence_propagate weights",
                (pattern.n_cols(), 1),
                (weights.len(), 1),
            ));
        }
        let (alpha, beta) = match normalization {
            Normalization::Asymmetric => (1.0, 0.0),
            Normalization::Symmetric => (0.5, 0.5),
        };
        let h = self.value(values).as_slice();
        let zv = self.value(z);
        let f = zv.cols();
        let (n, m) = (pattern.n_rows(), pattern.n_cols());

        let mut vertex_deg = vec![0.0; n];
        let mut edge_deg = vec![0.0; m];
        for k in 0..pattern.nnz() {
            let (i, e) = (pattern.entry_rows[k], pattern.entry_cols[k]);
            vertex_deg[i] += weights[e] * h[k];
            edge_deg[e] += h[k];
        }

        let mut z_scaled = zv.clone();
        if beta != 0.0 {
            for j in 0..n {
                let c = inv_pow(vertex_deg[j], beta);
                z_scaled.row_mut(j).iter_mut().for_each(|x| *x *= c);
            }
        }
        let mut q = DenseMatrix::zeros(m, f);
        for e in 0..m {
            for &k in pattern.col_entries(e) {
                axpy(h[k], z_scaled.row(pattern.entry_rows[k]), q.row_mut(e));
            }
        }
        let mut r = q;
        for e in 0..m {
            let c = if edge_deg[e] > 0.0 { weights[e] / edge_deg[e] } else { 0.0 };
            r.row_mut(e).iter_mut().for_each(|x| *x *= c);
        }
        let mut s = DenseMatrix::zeros(n, f);
        for i in 0..n {
            for k in pattern.row_entries(i) {
                axpy(h[k], r.row(pattern.entry_cols[k]), s.row_mut(i));
            }
        }
        let mut y = s.clone();
        for i in 0..n {
            let c = inv_pow(vertex_deg[i], alpha);
            y.row_mut(i).iter_mut().for_each(|x| *x *= c);
        }
        Ok(self.record(
            y,
            &[values, z],
            Op::IncidencePropagate(PropagateCache {
                values,
                z,
                pattern: Arc::clone(pattern),
                weights: Arc::clone(weights),
                alpha,
                beta,
                vertex_deg,
                edge_deg,
                z_scaled,
                r,
                s,
            }),
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        self.record(DenseMatrix::filled(1, 1, total), &[x], Op::Sum(x))
    }

    /// Mean softmax cross-entropy over the rows listed in `mask`.
    pub fn cross_entropy_masked(
        &mut self,
        logits: Var,
        labels: &Arc<Vec<usize>>,
        mask: &Arc<Vec<usize>>,
    ) -> Result<Var> {
        let lv = self.value(logits);
        if labels.len() != lv.rows() {
            return Err(mismatch("cross_entropy_masked", (lv.rows(), 1), (labels.len(), 1)));
        }
        if mask.is_empty() {
            return Err(Error::Config("cross-entropy mask is empty".into()));
        }
        let c = lv.cols();
        let mut probs = DenseMatrix::zeros(mask.len(), c);
        let mut loss = 0.0;
        for (r, &i) in mask.iter().enumerate() {
            if i >= lv.rows() {
                return Err(Error::IndexOutOfRange {
                    what: "mask row",
                    index: i,
                    bound: lv.rows(),
                });
            }
            let label = labels[i];
            if label >= c {
                return Err(Error::IndexOutOfRange {
                    what: "label",
                    index: label,
                    bound: c,
                });
            }
            let row = lv.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = probs.row_mut(r);
            let mut total = 0.0;
            for (pj, &x) in p.iter_mut().zip(row) {
                *pj = math::exp(x - max);
                total += *pj;
            }
            p.iter_mut().for_each(|x| *x /= total);
            loss += max + math::ln(total) - row[label];
        }
        loss /= mask.len() as f64;
        Ok(self.record(
            DenseMatrix::filled(1, 1, loss),
            &[logits],
            Op::CrossEntropy {
                logits,
                labels: Arc::clone(labels),
                mask: Arc::clone(mask),
                probs,
            },
        ))
    }

    fn accumulate(&mut self, v: Var, g: DenseMatrix) {
        if !self.needs_grad[v.0] {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Propagates gradients from the scalar `loss` to every value it depends
    /// on. Runs at most once between [`Tape::zero_grad`] calls.
    pub fn backward(&mut self, loss: Var) -> Result<BackwardStats> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape.0, shape.1));
        }
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        self.backward_done = true;
        self.grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        let nodes = core::mem::take(&mut self.nodes);
        let mut visited = 0;
        for node in nodes.iter().rev() {
            visited += 1;
            let Some(g) = self.grads[node.out.0].take() else {
                continue;
            };
            self.backward_node(node, &g)?;
            self.grads[node.out.0] = Some(g);
        }
        self.nodes = nodes;
        Ok(BackwardStats {
            nodes_visited: visited,
        })
    }

    fn backward_node(&mut self, node: &Node, g: &DenseMatrix) -> Result<()> {
        match &node.op {
            Op::MatMul(a, b) => {
                if self.needs_grad[a.0] {
                    let da = g.matmul_t(self.value(*b))?;
                    self.accumulate(*a, da);
                }
                if self.needs_grad[b.0] {
                    let db = self.value(*a).t_matmul(g)?;
                    self.accumulate(*b, db);
                }
            }
            Op::SparseApply { op, x } => {
                if self.needs_grad[x.0] {
                    let dx = op.spmm_transpose(g)?;
                    self.accumulate(*x, dx);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.clone());
            }
            Op::Scale(x, c) => self.accumulate(*x, g.scale(*c)),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    if self.needs_grad[p.0] {
                        let dp = DenseMatrix::from_fn(g.rows(), cols, |i, j| g.get(i, offset + j));
                        self.accumulate(p, dp);
                    }
                    offset += cols;
                }
            }
            Op::SliceRows { x, start } => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = DenseMatrix::zeros(rows, cols);
                dx.as_mut_slice()[start * cols..start * cols + g.as_slice().len()]
                    .copy_from_slice(g.as_slice());
                self.accumulate(*x, dx);
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = DenseMatrix::zeros(rows, cols);
                for i in 0..rows {
                    dx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                self.accumulate(*x, dx);
            }
            Op::Elu(x) => {
                let xv = self.value(*x);
                let mut dx = g.clone();
                for (d, &v) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                    if v < 0.0 {
                        *d *= math::exp(v);
                    }
                }
                self.accumulate(*x, dx);
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let mut dx = g.clone();
                for (d, &v) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                    if v <= 0.0 {
                        *d *= slope;
                    }
                }
                self.accumulate(*x, dx);
            }
            Op::Dropout { x, keep, scale } => {
                let mut dx = g.clone();
                for (d, &k) in dx.as_mut_slice().iter_mut().zip(keep) {
                    *d = if k { *d * scale } else { 0.0 };
                }
                self.accumulate(*x, dx);
            }
            Op::SegmentSoftmax { scores, offsets } => {
                let y = self.value(node.out).as_slice();
                let gs = g.as_slice();
                let mut dx = vec![0.0; y.len()];
                for seg in 0..offsets.len() - 1 {
                    let (lo, hi) = (offsets[seg], offsets[seg + 1]);
                    let inner: f64 = (lo..hi).map(|k| y[k] * gs[k]).sum();
                    for k in lo..hi {
                        dx[k] = y[k] * (gs[k] - inner);
                    }
                }
                self.accumulate(*scores, DenseMatrix::column(dx));
            }
            Op::GatherSum {
                u,
                v,
                u_index,
                v_index,
            } => {
                let gs = g.as_slice();
                if self.needs_grad[u.0] {
                    let mut du = vec![0.0; self.value(*u).rows()];
                    for (k, &i) in u_index.iter().enumerate() {
                        du[i] += gs[k];
                    }
                    self.accumulate(*u, DenseMatrix::column(du));
                }
                if self.needs_grad[v.0] {
                    let mut dv = vec![0.0; self.value(*v).rows()];
                    for (k, &i) in v_index.iter().enumerate() {
                        dv[i] += gs[k];
                    }
                    self.accumulate(*v, DenseMatrix::column(dv));
                }
            }
            Op::AttentionApply { values, pattern, z } => {
                let h = self.value(*values).as_slice();
                let zv = self.value(*z);
                let mut dh = vec![0.0; h.len()];
                let mut dz = DenseMatrix::zeros(zv.rows(), zv.cols());
                for i in 0..pattern.n_rows() {
                    let gi = g.row(i);
                    for k in pattern.row_entries(i) {
                        let c = pattern.entry_cols[k];
                        dh[k] = dot(gi, zv.row(c));
                        axpy(h[k], gi, dz.row_mut(c));
                    }
                }
                self.accumulate(*values, DenseMatrix::column(dh));
                self.accumulate(*z, dz);
            }
            Op::IncidencePropagate(c) => {
                let (dh, dz) = self.propagate_backward(c, g);
                self.accumulate(c.values, dh);
                self.accumulate(c.z, dz);
            }
            Op::Sum(x) => {
                let (r, cols) = self.value(*x).shape();
                self.accumulate(*x, DenseMatrix::filled(r, cols, g.get(0, 0)));
            }
            Op::CrossEntropy {
                logits,
                labels,
                mask,
                probs,
            } => {
                let (rows, cols) = self.value(*logits).shape();
                let scale = g.get(0, 0) / mask.len() as f64;
                let mut dl = DenseMatrix::zeros(rows, cols);
                for (r, &i) in mask.iter().enumerate() {
                    let dst = dl.row_mut(i);
                    for (d, &p) in dst.iter_mut().zip(probs.row(r)) {
                        *d += scale * p;
                    }
                    dst[labels[i]] -= scale;
                }
                self.accumulate(*logits, dl);
            }
        }
        Ok(())
    }

    fn propagate_backward(&self, c: &PropagateCache, g: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        let p = &*c.pattern;
        let w = &*c.weights;
        let h = self.value(c.values).as_slice();
        let zv = self.value(c.z);
        let (n, m, f) = (p.n_rows(), p.n_cols(), zv.cols());
        let mut dh = vec![0.0; h.len()];

        // Y_i = D_i^{-a} S_i
        let mut ds = g.clone();
        let mut d_vertex = vec![0.0; n];
        for i in 0..n {
            let d = c.vertex_deg[i];
            let ca = inv_pow(d, c.alpha);
            if d > 0.0 {
                d_vertex[i] = -c.alpha * ca / d * dot(g.row(i), c.s.row(i));
            }
            ds.row_mut(i).iter_mut().for_each(|x| *x *= ca);
        }
        // S_i = Σ_k h_k R_{e_k}
        let mut dr = DenseMatrix::zeros(m, f);
        for i in 0..n {
            for k in p.row_entries(i) {
                let e = p.entry_cols[k];
                dh[k] += dot(ds.row(i), c.r.row(e));
                axpy(h[k], ds.row(i), dr.row_mut(e));
            }
        }
        // R_e = (W_e / B_e) Q_e
        let mut dq = dr;
        let mut d_edge = vec![0.0; m];
        for e in 0..m {
            let b = c.edge_deg[e];
            if b > 0.0 {
                d_edge[e] = -dot(dq.row(e), c.r.row(e)) / b;
                let ce = w[e] / b;
                dq.row_mut(e).iter_mut().for_each(|x| *x *= ce);
            } else {
                dq.row_mut(e).iter_mut().for_each(|x| *x = 0.0);
            }
        }
        // Q_e = Σ_k h_k Z'_{i_k}
        let mut dz = DenseMatrix::zeros(n, f);
        for i in 0..n {
            for k in p.row_entries(i) {
                let e = p.entry_cols[k];
                dh[k] += dot(dq.row(e), c.z_scaled.row(i));
                axpy(h[k], dq.row(e), dz.row_mut(i));
            }
        }
        // Z'_j = D_j^{-b} Z_j
        if c.beta != 0.0 {
            for j in 0..n {
                let d = c.vertex_deg[j];
                let cb = inv_pow(d, c.beta);
                if d > 0.0 {
                    d_vertex[j] += -c.beta * cb / d * dot(dz.row(j), zv.row(j));
                }
                dz.row_mut(j).iter_mut().for_each(|x| *x *= cb);
            }
        }
        // D_i = Σ W_e h_k, B_e = Σ h_k
        for k in 0..h.len() {
            let (i, e) = (p.entry_rows[k], p.entry_cols[k]);
            dh[k] += w[e] * d_vertex[i] + d_edge[e];
        }
        (DenseMatrix::column(dh), dz)
    }
}

/// Central finite-difference gradient of a scalar function of several
/// matrices, for checking analytic gradients. Independent of the tape's
/// backward rules: only forward evaluations are used.
pub fn numerical_gradient(
    inputs: &[DenseMatrix],
    which: usize,
    step: f64,
    mut f: impl FnMut(&[DenseMatrix]) -> f64,
) -> DenseMatrix {
    let mut work = inputs.to_vec();
    let (rows, cols) = inputs[which].shape();
    let mut out = DenseMatrix::zeros(rows, cols);
    for k in 0..rows * cols {
        let orig = work[which].as_slice()[k];
        work[which].as_mut_slice()[k] = orig + step;
        let plus = f(&work);
        work[which].as_mut_slice()[k] = orig - step;
        let minus = f(&work);
        work[which].as_mut_slice()[k] = orig;
        out.as_mut_slice()[k] = (plus - minus) / (2.0 * step);
    }
    out
}

/// Floor on the denominator of [`max_relative_error`], so that entries
/// where both gradients are essentially zero are judged on absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `max_k |a_k − b_k| / max(|a_k|, |b_k|, RELATIVE_ERROR_FLOOR)`.
pub fn max_relative_error(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| {
            let denom = math::abs(x).max(math::abs(y)).max(RELATIVE_ERROR_FLOOR);
            math::abs(x - y) / denom
        })
        .fold(0.0, f64::max)
}
