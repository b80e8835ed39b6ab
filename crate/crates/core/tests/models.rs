mod common;

use std::sync::Arc;

use hgnn_core::autodiff::{max_relative_error, Tape};
use hgnn_core::dataset::{DatasetBundle, Split, Structure};
use hgnn_core::hypergraph::{from_citation_network, pairwise_to_hypergraph};
use hgnn_core::layers::{
    attention_forward, build_model, conv_forward, Activation, AttentionGraph, GraphInputs,
    ModelConfig, Variant,
};
use hgnn_core::optim::{glorot_bound, glorot_init};
use hgnn_core::random;
use hgnn_core::rng::seeded;
use hgnn_core::train::{TrainConfig, Trainer};
use hgnn_core::transition::{build_asymmetric_transition, build_symmetric_transition};
use hgnn_core::{DenseMatrix, Hypergraph, PairwiseGraph, SparseMatrix};
use nalgebra::DMatrix;

const FD_STEP: f64 = 1e-5;

/// Twelve vertices, features in [−1, 1], three classes.
fn twelve_vertex_bundle(seed: u64) -> DatasetBundle {
    let mut rng = seeded(seed);
    let n = 12;
    let links = random::citation_links(n, 18, &mut rng);
    DatasetBundle {
        name: "tiny".into(),
        features: random::dense(n, 4, &mut rng),
        labels: (0..n).map(|i| i % 3).collect(),
        class_names: vec!["a".into(), "b".into(), "c".into()],
        structure: Structure::Citations(links),
        split: Split {
            train: vec![0, 1, 2, 3, 4, 5],
            val: vec![6, 7, 8],
            test: vec![9, 10, 11],
        },
    }
}

fn small_config(variant: Variant) -> TrainConfig {
    let mut c = TrainConfig::for_dataset("synthetic", variant);
    c.model.heads = 2;
    c.model.hidden_per_head = 3;
    c
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for variant in Variant::ALL {
        for skip in [false, true] {
            let bundle = twelve_vertex_bundle(5);
            let mut config = small_config(variant);
            config.model.skip = skip;
            let trainer = Trainer::new(&bundle, config).unwrap();
            let model = trainer.initial_model(17);
            let (_, grads) = trainer.loss_and_gradients(&model).unwrap();
            let mut worst: f64 = 0.0;
            for (k, g) in grads.iter().enumerate() {
                let mut numeric = DenseMatrix::zeros(g.rows(), g.cols());
                for j in 0..g.as_slice().len() {
                    let mut probe = model.clone();
                    let orig = probe.params()[k].as_slice()[j];
                    probe.params_mut()[k].as_mut_slice()[j] = orig + FD_STEP;
                    let plus = trainer.loss_and_gradients(&probe).unwrap().0;
                    probe.params_mut()[k].as_mut_slice()[j] = orig - FD_STEP;
                    let minus = trainer.loss_and_gradients(&probe).unwrap().0;
                    numeric.as_mut_slice()[j] = (plus - minus) / (2.0 * FD_STEP);
                }
                worst = worst.max(max_relative_error(g, &numeric));
            }
            assert!(worst < 1e-4, "{variant} skip={skip}: relative error {worst}");
        }
    }
}

fn permuted_bundle(bundle: &DatasetBundle, perm: &[usize]) -> DatasetBundle {
    let mut labels = vec![0; bundle.labels.len()];
    for (i, &l) in bundle.labels.iter().enumerate() {
        labels[perm[i]] = l;
    }
    let Structure::Citations(links) = &bundle.structure else {
        unreachable!()
    };
    let map = |v: &Vec<usize>| v.iter().map(|&i| perm[i]).collect();
    DatasetBundle {
        features: bundle.features.permute_rows(perm),
        labels,
        structure: Structure::Citations(links.iter().map(|&(a, b)| (perm[a], perm[b])).collect()),
        split: Split {
            train: map(&bundle.split.train),
            val: map(&bundle.split.val),
            test: map(&bundle.split.test),
        },
        ..bundle.clone()
    }
}

#[test]
fn relabeling_vertices_permutes_outputs() {
    let bundle = common::synthetic_citations(60, 3, 9, 2, common::small_sizes());
    let perm = random::permutation(60, &mut seeded(8));
    let moved = permuted_bundle(&bundle, &perm);
    for variant in Variant::ALL {
        let config = small_config(variant).model;
        let run = |b: &DatasetBundle| {
            let graphs = b.graphs_for(variant).unwrap();
            let model = build_model(config, graphs.inputs(), b.n_features(), b.n_classes(), 4).unwrap();
            model.predict(&Arc::new(b.features.clone())).unwrap()
        };
        let base = run(&bundle);
        let other = run(&moved);
        let mut worst: f64 = 0.0;
        for i in 0..60 {
            for j in 0..base.cols() {
                worst = worst.max((base.get(i, j) - other.get(perm[i], j)).abs());
            }
        }
        assert!(worst < 1e-12, "{variant}: {worst}");
    }
}

#[test]
fn hyper_conv_parameter_census_for_cora_shapes() {
    let hg = from_citation_network(&[(0, 1), (1, 2)], 3).unwrap();
    let graphs = GraphInputs {
        hypergraph: Some(&hg),
        pairwise: None,
    };
    let model = build_model(ModelConfig::new(Variant::HyperConv), graphs, 1433, 7, 0).unwrap();
    assert_eq!(model.parameter_count(), 1433 * 64 + 64 * 7);
    assert_eq!(model.parameter_count(), 92_160);
}

fn na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

#[test]
fn conv_layer_on_pairwise_graph_equals_half_renormalized_gcn_layer() {
    for seed in 0..5 {
        let mut rng = seeded(seed);
        let g = random::pairwise_graph(15, 0.2, &mut rng);
        let hg = pairwise_to_hypergraph(&g).unwrap();
        let t = Arc::new(build_symmetric_transition(&hg, &hg.degrees().unwrap()).unwrap().matrix);
        let x = random::dense(15, 4, &mut rng);
        let p = random::dense(4, 3, &mut rng);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let pv = tape.param(p.clone());
        let y = conv_forward(&mut tape, &t, xv, pv, Activation::Elu).unwrap();

        let a = DMatrix::from_fn(15, 15, |i, j| g.adjacency().get(i, j));
        let d: Vec<f64> = (0..15).map(|i| a.row(i).sum()).collect();
        let half_tilde = DMatrix::from_fn(15, 15, |i, j| {
            let base = a[(i, j)] / (d[i] * d[j]).sqrt();
            0.5 * if i == j { 1.0 + base } else { base }
        });
        let want = (half_tilde * na(&x) * na(&p)).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        assert!((na(tape.value(y)) - want).abs().max() < 1e-12);
    }
}

#[test]
fn uniform_attention_reduces_to_row_normalized_convolution() {
    let mut rng = seeded(12);
    let n = 20;
    let links = random::citation_links(n, 30, &mut rng);
    let hg = from_citation_network(&links, n).unwrap();
    let graph = AttentionGraph::from_hypergraph(&hg).unwrap();
    let x = random::dense(n, 5, &mut rng);
    let p = random::dense(5, 4, &mut rng);

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pv = tape.param(p.clone());
    let av = tape.param(DenseMatrix::zeros(8, 1));
    let y = attention_forward(&mut tape, &graph, xv, pv, av, 0.2, None).unwrap();

    // Equal scores give each row of H the value 1/|row|.
    let h = hg.incidence();
    let row_normalized = h.map_entries(|i, _, v| v / h.row(i).0.len() as f64);
    let soft = Hypergraph::new(row_normalized, hg.edge_weights().to_vec()).unwrap();
    let t = build_asymmetric_transition(&soft, &soft.degrees().unwrap()).unwrap();
    let want = t.apply(&x.matmul(&p).unwrap()).unwrap();
    assert!(tape.value(y).max_abs_diff(&want) < 1e-12);
}

#[test]
fn binary_attention_values_equal_asymmetric_convolution() {
    let mut rng = seeded(13);
    let hg = random::weighted_hypergraph(14, 9, 3.0, &mut rng);
    let pattern = Arc::new(hgnn_core::autodiff::IncidencePattern::from_sparse(hg.incidence()));
    let z = random::dense(14, 3, &mut rng);
    let mut tape = Tape::new();
    let h = tape.constant(DenseMatrix::column(vec![1.0; pattern.nnz()]));
    let zv = tape.constant(z.clone());
    let y = tape
        .incidence_propagate(
            h,
            &pattern,
            &Arc::new(hg.edge_weights().to_vec()),
            zv,
            hgnn_core::transition::Normalization::Asymmetric,
        )
        .unwrap();
    let t = build_asymmetric_transition(&hg, &hg.degrees().unwrap()).unwrap();
    assert!(tape.value(y).max_abs_diff(&t.apply(&z).unwrap()) < 1e-12);
}

#[test]
fn attention_rows_sum_to_one() {
    let mut rng = seeded(21);
    let g = random::pairwise_graph(25, 0.15, &mut rng);
    let hg = from_citation_network(&g.edges(), 25).unwrap();
    for graph in [
        AttentionGraph::from_hypergraph(&hg).unwrap(),
        AttentionGraph::from_pairwise(&g).unwrap(),
    ] {
        let mut tape = Tape::new();
        let z = tape.constant(random::dense(25, 4, &mut rng));
        let a = tape.param(random::dense(8, 1, &mut rng).scale(3.0));
        let vals = hgnn_core::layers::attention_incidence(&mut tape, &graph, z, a, 0.2).unwrap();
        let v = tape.value(vals).as_slice();
        let offsets = graph.pattern().row_offsets();
        for i in 0..25 {
            let row = &v[offsets[i]..offsets[i + 1]];
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn glorot_samples_are_centered_and_bounded() {
    let w = glorot_init(316, 317, &mut seeded(99));
    assert!(w.as_slice().len() >= 100_000);
    let bound = glorot_bound(316, 317);
    assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
    let mean = w.sum() / w.as_slice().len() as f64;
    assert!(mean.abs() < 0.01, "mean {mean}");
}

#[test]
fn gat_star_attends_over_neighbours_and_self() {
    let g = PairwiseGraph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
    let graph = AttentionGraph::from_pairwise(&g).unwrap();
    let want = SparseMatrix::from_triplets(
        4,
        4,
        &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)],
    )
    .unwrap();
    assert_eq!(graph.pattern().to_sparse(&[1.0; 8]), want);
}
