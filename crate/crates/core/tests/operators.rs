//! Structural invariants of the hypergraph constructions and transition
//! operators, checked against dense nalgebra oracles on random instances.

use hgnn_core::hypergraph::{compute_degrees, from_citation_network, pairwise_to_hypergraph};
use hgnn_core::random;
use hgnn_core::rng::seeded;
use hgnn_core::transition::{
    build_asymmetric_transition, build_gcn_transition, build_symmetric_transition, reference,
    spectral_radius,
};
use hgnn_core::{DenseMatrix, Hypergraph, SparseMatrix};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn to_na(m: &SparseMatrix) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.n_rows(), m.n_cols());
    for (i, j, v) in m.iter() {
        out[(i, j)] = v;
    }
    out
}

fn dense_to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

/// `D^{-a} H W B^{-1} Hᵀ D^{-b}` straight from the definition.
fn oracle_operator(hg: &Hypergraph, a: f64, b: f64) -> DMatrix<f64> {
    let h = to_na(hg.incidence());
    let w = hg.edge_weights();
    let (n, m) = (h.nrows(), h.ncols());
    let d: Vec<f64> = (0..n).map(|i| (0..m).map(|e| w[e] * h[(i, e)]).sum()).collect();
    let bdeg: Vec<f64> = (0..m).map(|e| (0..n).map(|i| h[(i, e)]).sum()).collect();
    let left = DMatrix::from_fn(n, n, |i, j| if i == j { d[i].powf(-a) } else { 0.0 });
    let right = DMatrix::from_fn(n, n, |i, j| if i == j { d[i].powf(-b) } else { 0.0 });
    let mid = DMatrix::from_fn(m, m, |e, f| if e == f { w[e] / bdeg[e] } else { 0.0 });
    left * &h * mid * h.transpose() * right
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn hypergraph_strategy() -> impl Strategy<Value = Hypergraph> {
    (2usize..40, 1usize..30, 1.0f64..6.0, any::<u64>(), any::<bool>()).prop_map(
        |(n, m, card, seed, weighted)| {
            let mut rng = seeded(seed);
            if weighted {
                random::weighted_hypergraph(n, m, card, &mut rng)
            } else {
                random::hypergraph(n, m, card, &mut rng)
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degrees_match_scalar_loop(hg in hypergraph_strategy()) {
        let deg = compute_degrees(hg.incidence(), hg.edge_weights()).unwrap();
        let dense = hg.incidence().to_dense();
        for i in 0..hg.n_vertices() {
            let mut d = 0.0;
            for e in 0..hg.n_hyperedges() {
                d += hg.edge_weights()[e] * dense.get(i, e);
            }
            prop_assert_eq!(deg.vertex_degrees[i], d);
        }
        for e in 0..hg.n_hyperedges() {
            let mut b = 0.0;
            for i in 0..hg.n_vertices() {
                b += dense.get(i, e);
            }
            prop_assert_eq!(deg.edge_degrees[e], b);
        }
    }

    #[test]
    fn factorized_operators_match_definition(hg in hypergraph_strategy()) {
        let deg = hg.degrees().unwrap();
        let sym = build_symmetric_transition(&hg, &deg).unwrap();
        let asym = build_asymmetric_transition(&hg, &deg).unwrap();
        prop_assert!(max_diff(&to_na(&sym.matrix), &oracle_operator(&hg, 0.5, 0.5)) < 1e-12);
        prop_assert!(max_diff(&to_na(&asym.matrix), &oracle_operator(&hg, 1.0, 0.0)) < 1e-12);
        let naive = reference::symmetric(&hg).unwrap();
        prop_assert!(max_diff(&to_na(&sym.matrix), &dense_to_na(&naive)) < 1e-12);
    }

    #[test]
    fn symmetric_operator_is_symmetric_psd_and_bounded(hg in hypergraph_strategy()) {
        let t = build_symmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
        prop_assert!(t.matrix.asymmetry() <= 1e-12);
        let dense = to_na(&t.matrix);
        let sym = (&dense + dense.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        for &l in eig.eigenvalues.iter() {
            prop_assert!(l >= -1e-10, "eigenvalue {}", l);
            prop_assert!(l <= 1.0 + 1e-10, "eigenvalue {}", l);
        }
        let est = spectral_radius(&t.matrix, 2000, 1e-12).unwrap();
        let top = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!((est.value - top).abs() < 1e-6, "power {} eig {}", est.value, top);
    }

    #[test]
    fn asymmetric_rows_sum_to_one(hg in hypergraph_strategy()) {
        let t = build_asymmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
        for s in t.matrix.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        prop_assert!(t.matrix.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn pairwise_hypergraph_reduces_to_half_renormalized_adjacency(n in 2usize..30, p in 0.0f64..0.5, seed in any::<u64>()) {
        let g = random::pairwise_graph(n, p, &mut seeded(seed));
        let hg = pairwise_to_hypergraph(&g).unwrap();
        let t = build_symmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
        let a = to_na(g.adjacency());
        let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        let tilde = DMatrix::from_fn(n, n, |i, j| {
            let base = a[(i, j)] / (d[i] * d[j]).sqrt();
            if i == j { 1.0 + base } else { base }
        });
        prop_assert!(max_diff(&to_na(&t.matrix), &(tilde * 0.5)) < 1e-12);
        let gcn = build_gcn_transition(&g).unwrap();
        prop_assert!(gcn.matrix.asymmetry() <= 1e-12);
    }

    #[test]
    fn citation_hypergraph_matches_brute_force(n in 1usize..50, links in 0usize..120, seed in any::<u64>()) {
        let raw = random::citation_links(n, links, &mut seeded(seed));
        let hg = from_citation_network(&raw, n).unwrap();
        prop_assert_eq!(hg.n_hyperedges(), n);
        for e in 0..n {
            let mut want: Vec<usize> = vec![e];
            for &(a, b) in &raw {
                if a == e { want.push(b); }
                if b == e { want.push(a); }
            }
            want.sort_unstable();
            want.dedup();
            prop_assert_eq!(hg.members(e), want);
        }
        prop_assert_eq!(hg.centroids().unwrap(), &(0..n).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn spmm_matches_triple_loop(seed in any::<u64>(), density in 0.0f64..1.0) {
        let mut rng = seeded(seed);
        let s = random::sparse(30, 30, density, &mut rng);
        let x = random::dense(30, 30, &mut rng);
        let dense = s.to_dense();
        let y = s.spmm(&x).unwrap();
        let yt = s.spmm_transpose(&x).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                let mut acc = 0.0;
                let mut acc_t = 0.0;
                for k in 0..30 {
                    acc += dense.get(i, k) * x.get(k, j);
                    acc_t += dense.get(k, i) * x.get(k, j);
                }
                prop_assert!((y.get(i, j) - acc).abs() < 1e-13);
                prop_assert!((yt.get(i, j) - acc_t).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sparse_product_matches_dense(seed in any::<u64>(), d1 in 0.0f64..0.6, d2 in 0.0f64..0.6) {
        let mut rng = seeded(seed);
        let a = random::sparse(17, 23, d1, &mut rng);
        let b = random::sparse(23, 11, d2, &mut rng);
        let c = a.matmul_sparse(&b).unwrap();
        let want = to_na(&a) * to_na(&b);
        prop_assert!(max_diff(&to_na(&c), &want) < 1e-12);
        prop_assert!(c.values().iter().all(|&v| v != 0.0));
        for i in 0..c.n_rows() {
            prop_assert!(c.row(i).0.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn relabeling_permutes_operator(hg in hypergraph_strategy(), seed in any::<u64>()) {
        let n = hg.n_vertices();
        let perm = random::permutation(n, &mut seeded(seed));
        let permuted = Hypergraph::new(hg.incidence().permute(Some(&perm), None), hg.edge_weights().to_vec()).unwrap();
        let t = build_symmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
        let tp = build_symmetric_transition(&permuted, &permuted.degrees().unwrap()).unwrap();
        for (i, j, v) in t.matrix.iter() {
            prop_assert!((tp.matrix.get(perm[i], perm[j]) - v).abs() < 1e-12);
        }
        prop_assert_eq!(t.matrix.nnz(), tp.matrix.nnz());
    }
}
