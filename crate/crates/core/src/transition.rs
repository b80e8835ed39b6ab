//! Normalized N×N transition operators for every model variant.
//!
//! The hypergraph builders never form dense intermediates: diagonal factors
//! are folded into the sparse incidence as row/column scalings and a single
//! sparse-sparse product produces the operator.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::hypergraph::{DegreePair, Hypergraph, PairwiseGraph};
use crate::math;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionKind {
    HypergraphSymmetric,
    HypergraphAsymmetric,
    GcnRenormalized,
    Averaged,
}

/// Which normalization a hypergraph operator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `D^{-1/2} H W B^{-1} Hᵀ D^{-1/2}`
    Symmetric,
    /// `D^{-1} H W B^{-1} Hᵀ`
    Asymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOperator {
    pub matrix: SparseMatrix,
    pub kind: TransitionKind,
}

impl TransitionOperator {
    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.matrix.spmm(x)
    }
}

fn check_degrees(hg: &Hypergraph, deg: &DegreePair) -> Result<()> {
    if deg.vertex_degrees.len() != hg.n_vertices() || deg.edge_degrees.len() != hg.n_hyperedges()
    {
        return Err(Error::DimensionMismatch {
            op: "transition degrees",
            expected: (hg.n_vertices(), hg.n_hyperedges()),
            got: (deg.vertex_degrees.len(), deg.edge_degrees.len()),
        });
    }
    if let Some(i) = deg.vertex_degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDegree {
            what: "vertex",
            index: i,
        });
    }
    if let Some(e) = deg.edge_degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDegree {
            what: "hyperedge",
            index: e,
        });
    }
    Ok(())
}

/// `D^{-1/2} H W B^{-1} Hᵀ D^{-1/2}`, computed as `F Fᵀ` with
/// `F = D^{-1/2} H (W B^{-1})^{1/2}`.
pub fn build_symmetric_transition(hg: &Hypergraph, deg: &DegreePair) -> Result<TransitionOperator> {
    check_degrees(hg, deg)?;
    let row_scale: Vec<f64> = deg.vertex_degrees.iter().map(|&d| 1.0 / math::sqrt(d)).collect();
    let col_scale: Vec<f64> = hg
        .edge_weights()
        .iter()
        .zip(&deg.edge_degrees)
        .map(|(&w, &b)| math::sqrt(w / b))
        .collect();
    let factor = hg
        .incidence()
        .map_entries(|i, e, h| row_scale[i] * h * col_scale[e]);
    let matrix = factor.matmul_sparse(&factor.transpose())?;
    Ok(TransitionOperator {
        matrix,
        kind: TransitionKind::HypergraphSymmetric,
    })
}

/// `D^{-1} H W B^{-1} Hᵀ` as `(D^{-1} H W)(H B^{-1})ᵀ`: a row L1
/// normalization of `HW`, a column L1 normalization of `H`, one product.
pub fn build_asymmetric_transition(
    hg: &Hypergraph,
    deg: &DegreePair,
) -> Result<TransitionOperator> {
    check_degrees(hg, deg)?;
    let w = hg.edge_weights();
    let left = hg
        .incidence()
        .map_entries(|i, e, h| h * w[e] / deg.vertex_degrees[i]);
    let right_t = hg
        .incidence()
        .map_entries(|_, e, h| h / deg.edge_degrees[e])
        .transpose();
    let matrix = left.matmul_sparse(&right_t)?;
    Ok(TransitionOperator {
        matrix,
        kind: TransitionKind::HypergraphAsymmetric,
    })
}

/// How [`build_gcn_transition_with`] treats vertices without neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsolatedVertices {
    /// Fail with [`Error::ZeroDegree`].
    Reject,
    /// The vertex keeps only its identity connection (`Â_ii = 1`).
    SelfLoop,
}

/// Renormalized GCN operator `D̃^{-1/2} Ã D̃^{-1/2}` with
/// `Ã = I + D^{-1/2} A D^{-1/2}` and `D̃` the row sums of `Ã`.
pub fn build_gcn_transition(g: &PairwiseGraph) -> Result<TransitionOperator> {
    build_gcn_transition_with(g, IsolatedVertices::Reject)
}

pub fn build_gcn_transition_with(
    g: &PairwiseGraph,
    isolated: IsolatedVertices,
) -> Result<TransitionOperator> {
    let deg = g.degrees();
    if isolated == IsolatedVertices::Reject {
        if let Some(i) = deg.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDegree {
                what: "vertex",
                index: i,
            });
        }
    }
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / math::sqrt(d) } else { 0.0 })
        .collect();
    let normalized = g
        .adjacency()
        .map_entries(|i, j, a| inv_sqrt[i] * a * inv_sqrt[j]);
    let tilde = normalized.linear_combination(1.0, &SparseMatrix::identity(g.n_vertices()), 1.0)?;
    let tilde_inv_sqrt: Vec<f64> = tilde.row_sums().iter().map(|&d| 1.0 / math::sqrt(d)).collect();
    let matrix = tilde.map_entries(|i, j, v| tilde_inv_sqrt[i] * v * tilde_inv_sqrt[j]);
    Ok(TransitionOperator {
        matrix,
        kind: TransitionKind::GcnRenormalized,
    })
}

/// Equal-weight mixture `½(a + b)` of two operators.
pub fn average_transitions(
    a: &TransitionOperator,
    b: &TransitionOperator,
) -> Result<TransitionOperator> {
    let matrix = a.matrix.linear_combination(0.5, &b.matrix, 0.5)?;
    Ok(TransitionOperator {
        matrix,
        kind: TransitionKind::Averaged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    /// Estimated magnitude of the dominant eigenvalue.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the all-ones start stalled and the fallback start was used.
    pub restarted: bool,
}

/// Power iteration for the dominant eigenvalue magnitude, started from the
/// all-ones vector. If that start collapses (estimate below `10·tol`), it
/// is retried once from a fixed pseudo-random vector.
pub fn spectral_radius(t: &SparseMatrix, iters: usize, tol: f64) -> Result<SpectralEstimate> {
    if t.n_rows() != t.n_cols() {
        return Err(Error::DimensionMismatch {
            op: "spectral_radius",
            expected: (t.n_rows(), t.n_rows()),
            got: t.shape(),
        });
    }
    let n = t.n_rows();
    if n == 0 {
        return Ok(SpectralEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
            restarted: false,
        });
    }
    let first = power_iterate(t, vec![1.0; n], iters, tol)?;
    if first.value >= 10.0 * tol {
        return Ok(first);
    }
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let start = (0..n)
        .map(|_| {
            state = crate::rng::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let mut second = power_iterate(t, start, iters, tol)?;
    second.restarted = true;
    Ok(second)
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

fn power_iterate(
    t: &SparseMatrix,
    start: Vec<f64>,
    iters: usize,
    tol: f64,
) -> Result<SpectralEstimate> {
    let n0 = norm(&start);
    let mut v = DenseMatrix::column(start.into_iter().map(|x| x / n0).collect());
    let mut value = 0.0;
    for k in 1..=iters {
        let w = t.spmm(&v)?;
        let next = norm(w.as_slice());
        if next == 0.0 {
            return Ok(SpectralEstimate {
                value: 0.0,
                iterations: k,
                converged: true,
                restarted: false,
            });
        }
        let done = math::abs(next - value) <= tol * next.max(1.0);
        value = next;
        v = w.scale(1.0 / next);
        if done {
            return Ok(SpectralEstimate {
                value,
                iterations: k,
                converged: true,
                restarted: false,
            });
        }
    }
    Ok(SpectralEstimate {
        value,
        iterations: iters,
        converged: false,
        restarted: false,
    })
}

/// Literal dense evaluation of the operator formulas: every diagonal factor
/// is materialized and multiplied with full dense products. This is the
/// baseline the factorized builders are benchmarked against.
pub mod reference {
    use super::*;

    fn dense_diag(values: impl Iterator<Item = f64>) -> DenseMatrix {
        let v: Vec<f64> = values.collect();
        let mut d = DenseMatrix::zeros(v.len(), v.len());
        for (i, x) in v.into_iter().enumerate() {
            d.set(i, i, x);
        }
        d
    }

    fn parts(hg: &Hypergraph) -> Result<(DegreePair, DenseMatrix, DenseMatrix, DenseMatrix)> {
        let deg = hg.degrees()?;
        let h = hg.incidence().to_dense();
        let w = dense_diag(hg.edge_weights().iter().copied());
        let b_inv = dense_diag(deg.edge_degrees.iter().map(|b| 1.0 / b));
        Ok((deg, h, w, b_inv))
    }

    /// `D^{-1/2} · H · W · B^{-1} · Hᵀ · D^{-1/2}`, six dense factors.
    pub fn symmetric(hg: &Hypergraph) -> Result<DenseMatrix> {
        let (deg, h, w, b_inv) = parts(hg)?;
        let d_inv_sqrt = dense_diag(deg.vertex_degrees.iter().map(|d| 1.0 / math::sqrt(*d)));
        d_inv_sqrt
            .matmul_full(&h)?
            .matmul_full(&w)?
            .matmul_full(&b_inv)?
            .matmul_full(&h.transpose())?
            .matmul_full(&d_inv_sqrt)
    }

    /// `D^{-1} · H · W · B^{-1} · Hᵀ`, five dense factors.
    pub fn asymmetric(hg: &Hypergraph) -> Result<DenseMatrix> {
        let (deg, h, w, b_inv) = parts(hg)?;
        let d_inv = dense_diag(deg.vertex_degrees.iter().map(|d| 1.0 / d));
        d_inv
            .matmul_full(&h)?
            .matmul_full(&w)?
            .matmul_full(&b_inv)?
            .matmul_full(&h.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::pairwise_to_hypergraph;

    fn half_ones() -> DenseMatrix {
        DenseMatrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]])
    }

    #[test]
    fn single_pair_symmetric_and_asymmetric() {
        let hg = Hypergraph::from_hyperedges(2, &[vec![0, 1]]).unwrap();
        let deg = hg.degrees().unwrap();
        let s = build_symmetric_transition(&hg, &deg).unwrap();
        let a = build_asymmetric_transition(&hg, &deg).unwrap();
        assert!(s.matrix.to_dense().max_abs_diff(&half_ones()) < 1e-15);
        assert!(a.matrix.to_dense().max_abs_diff(&half_ones()) < 1e-15);
        assert_eq!(s.kind, TransitionKind::HypergraphSymmetric);
        assert_eq!(a.kind, TransitionKind::HypergraphAsymmetric);
    }

    #[test]
    fn gcn_single_edge() {
        let g = PairwiseGraph::from_edges(2, &[(0, 1)]).unwrap();
        let t = build_gcn_transition(&g).unwrap();
        assert!(t.matrix.to_dense().max_abs_diff(&half_ones()) < 1e-15);
    }

    #[test]
    fn gcn_isolated_vertex() {
        let g = PairwiseGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(
            build_gcn_transition(&g).unwrap_err(),
            Error::ZeroDegree { what: "vertex", index: 2 }
        );
        let t = build_gcn_transition_with(&g, IsolatedVertices::SelfLoop).unwrap();
        assert_eq!(t.matrix.get(2, 2), 1.0);
        assert_eq!(t.matrix.row(2).0, &[2]);
    }

    #[test]
    fn averaging() {
        let hg = Hypergraph::from_hyperedges(2, &[vec![0, 1]]).unwrap();
        let a = build_symmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
        let same = average_transitions(&a, &a).unwrap();
        assert_eq!(same.matrix, a.matrix);
        assert_eq!(same.kind, TransitionKind::Averaged);

        let id = TransitionOperator {
            matrix: SparseMatrix::identity(2),
            kind: TransitionKind::GcnRenormalized,
        };
        let m = average_transitions(&a, &id).unwrap();
        let want = DenseMatrix::from_rows(&[&[0.75, 0.25], &[0.25, 0.75]]);
        assert!(m.matrix.to_dense().max_abs_diff(&want) < 1e-15);

        let big = TransitionOperator {
            matrix: SparseMatrix::identity(3),
            kind: TransitionKind::GcnRenormalized,
        };
        assert!(matches!(
            average_transitions(&a, &big),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spectral_radius_small_cases() {
        let hg = Hypergraph::from_hyperedges(2, &[vec![0, 1]]).unwrap();
        let t = build_symmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
        let est = spectral_radius(&t.matrix, 100, 1e-12).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12 && est.converged);

        let est = spectral_radius(&SparseMatrix::identity(5), 100, 1e-12).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_restarts_on_orthogonal_start() {
        // Eigenvector of eigenvalue 2 is (1, -1); the all-ones start is
        // annihilated.
        let t = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]).unwrap();
        let est = spectral_radius(&t, 200, 1e-12).unwrap();
        assert!(est.restarted);
        assert!((est.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fig2_symmetric_matches_reference_and_is_exactly_symmetric() {
        let hg = Hypergraph::from_hyperedges(5, &[vec![0, 1, 2], vec![2, 3, 4]]).unwrap();
        let t = build_symmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
        assert_eq!(t.matrix.asymmetry(), 0.0);
        let naive = reference::symmetric(&hg).unwrap();
        assert!(t.matrix.to_dense().max_abs_diff(&naive) < 1e-15);
    }

    #[test]
    fn degree_length_mismatch() {
        let hg = Hypergraph::from_hyperedges(2, &[vec![0, 1]]).unwrap();
        let deg = DegreePair {
            vertex_degrees: vec![1.0],
            edge_degrees: vec![2.0],
        };
        assert!(build_symmetric_transition(&hg, &deg).is_err());
        let deg = DegreePair {
            vertex_degrees: vec![1.0, 0.0],
            edge_degrees: vec![2.0],
        };
        assert!(matches!(
            build_asymmetric_transition(&hg, &deg),
            Err(Error::ZeroDegree { .. })
        ));
    }

    #[test]
    fn pairwise_symmetric_operator_has_half_diagonal() {
        let g = PairwiseGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        let hg = pairwise_to_hypergraph(&g).unwrap();
        let t = build_symmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
        for i in 0..4 {
            assert!((t.matrix.get(i, i) - 0.5).abs() < 1e-15);
        }
    }
}
