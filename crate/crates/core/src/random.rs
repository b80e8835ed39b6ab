//! Random structural instances for property checks and benchmarks.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::dense::DenseMatrix;
use crate::hypergraph::{Hypergraph, PairwiseGraph};
use crate::rng::{below, uniform01};
use crate::sparse::SparseMatrix;

/// Fisher–Yates shuffle of `0..n`.
pub fn permutation(n: usize, rng: &mut impl RngCore) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = below(rng, i + 1);
        p.swap(i, j);
    }
    p
}

/// Connected graph: a random spanning tree plus each remaining pair with
/// probability `extra_edge_prob`. Requires `n >= 2`.
pub fn pairwise_graph(n: usize, extra_edge_prob: f64, rng: &mut impl RngCore) -> PairwiseGraph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((below(rng, v), v));
    }
    for a in 0..n {
        for b in a + 1..n {
            if uniform01(rng) < extra_edge_prob {
                edges.push((a, b));
            }
        }
    }
    PairwiseGraph::from_edges(n, &edges).expect("indices in range")
}

/// Unit-weight hypergraph whose hyperedges have mean cardinality close to
/// `mean_cardinality` (at least 1). Vertex `i` is always placed in
/// hyperedge `i mod m` so no vertex is left uncovered.
pub fn hypergraph(
    n: usize,
    m: usize,
    mean_cardinality: f64,
    rng: &mut impl RngCore,
) -> Hypergraph {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for v in 0..n {
        members[v % m].push(v);
    }
    let spread = (2.0 * (mean_cardinality - 1.0)).max(0.0);
    for edge in members.iter_mut() {
        let target = 1 + (uniform01(rng) * (spread + 1.0)) as usize;
        let target = target.min(n);
        while edge.len() < target {
            let v = below(rng, n);
            if !edge.contains(&v) {
                edge.push(v);
            }
        }
    }
    Hypergraph::from_hyperedges(n, &members).expect("every vertex and hyperedge is covered")
}

/// Same structure as [`hypergraph`] with weights drawn from `[0.5, 2)`.
pub fn weighted_hypergraph(
    n: usize,
    m: usize,
    mean_cardinality: f64,
    rng: &mut impl RngCore,
) -> Hypergraph {
    let hg = hypergraph(n, m, mean_cardinality, rng);
    let weights = (0..m).map(|_| 0.5 + 1.5 * uniform01(rng)).collect();
    Hypergraph::new(hg.incidence().clone(), weights).expect("positive weights")
}

/// Random citation links over `n` articles, roughly `links` of them.
pub fn citation_links(n: usize, links: usize, rng: &mut impl RngCore) -> Vec<(usize, usize)> {
    (0..links).map(|_| (below(rng, n), below(rng, n))).collect()
}

/// Dense matrix with entries uniform in `[-1, 1)`.
pub fn dense(rows: usize, cols: usize, rng: &mut impl RngCore) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| 2.0 * uniform01(rng) - 1.0)
}

/// Sparse matrix with each entry nonzero (uniform in `[-1, 1)`) with
/// probability `density`.
pub fn sparse(rows: usize, cols: usize, density: f64, rng: &mut impl RngCore) -> SparseMatrix {
    let mut triplets = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if uniform01(rng) < density {
                triplets.push((i, j, 2.0 * uniform01(rng) - 1.0));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, &triplets).expect("in range")
}

/// Binary bag-of-words style features.
pub fn binary_features(rows: usize, cols: usize, density: f64, rng: &mut impl RngCore) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        if uniform01(rng) < density {
            1.0
        } else {
            0.0
        }
    })
}
