//! Randomized invariant suite behind the `verify` subcommand. Operators are
//! compared with independent oracles: scalar loops, literal dense products
//! and a dense symmetric eigensolver.

use std::fmt;
use std::sync::Arc;

use hgnn_core::autodiff::{max_relative_error, Tape};
use hgnn_core::dataset::{DatasetBundle, Split, Structure};
use hgnn_core::hypergraph::{from_citation_network, pairwise_to_hypergraph};
use hgnn_core::layers::{attention_incidence, build_model, AttentionGraph, Variant};
use hgnn_core::rng::{below, seeded, splitmix64, uniform01, Rng};
use hgnn_core::train::{TrainConfig, Trainer};
use hgnn_core::transition::{
    build_asymmetric_transition, build_symmetric_transition, reference, spectral_radius,
};
use hgnn_core::{random, DenseMatrix, Hypergraph, SparseMatrix};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub instances: usize,
    pub max_n: usize,
    pub seed: u64,
    /// Flip the sign of the symmetric operator's diagonal to check that the
    /// suite notices.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            instances: 100,
            max_n: 64,
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub instances: usize,
    /// Largest observed deviation from the expected value.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for PropertyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<28} instances {:>4}  max deviation {:.3e}  tolerance {:.0e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.max_deviation,
            self.tolerance
        )
    }
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    instances: usize,
    worst: f64,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            instances: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, deviation: f64) {
        self.instances += 1;
        // NaN counts as failure.
        if deviation.is_nan() || deviation > self.worst {
            self.worst = if deviation.is_nan() { f64::INFINITY } else { deviation };
        }
    }

    fn finish(self) -> PropertyOutcome {
        PropertyOutcome {
            name: self.name,
            instances: self.instances,
            max_deviation: self.worst,
            tolerance: self.tolerance,
            passed: self.worst <= self.tolerance,
        }
    }
}

fn to_na(m: &SparseMatrix) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.n_rows(), m.n_cols());
    for (i, j, v) in m.iter() {
        out[(i, j)] = v;
    }
    out
}

fn dense_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc, v| if v.is_nan() { f64::INFINITY } else { acc.max(v.abs()) })
}

fn instance_rng(seed: u64, property: u64, instance: usize) -> Rng {
    seeded(splitmix64(seed ^ splitmix64(property << 32 | instance as u64)))
}

fn random_hypergraph(max_n: usize, rng: &mut Rng) -> Hypergraph {
    let n = 2 + below(rng, max_n.max(2) - 1);
    let m = 1 + below(rng, max_n.max(1));
    let card = 1.0 + 5.0 * uniform01(rng);
    if uniform01(rng) < 0.5 {
        random::hypergraph(n, m, card, rng)
    } else {
        random::weighted_hypergraph(n, m, card, rng)
    }
}

/// Symmetric operator as the suite sees it, optionally with the fault.
fn symmetric_under_test(hg: &Hypergraph, fault: bool) -> Result<SparseMatrix> {
    let t = build_symmetric_transition(hg, &hg.degrees()?)?.matrix;
    Ok(if fault {
        t.map_entries(|i, j, v| if i == j { -v } else { v })
    } else {
        t
    })
}

/// `½(I + D^{-1/2} A D^{-1/2})` from the adjacency by scalar loops.
fn half_gcn_oracle(a: &SparseMatrix) -> DMatrix<f64> {
    let n = a.n_rows();
    let d: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let off = if d[i] > 0.0 && d[j] > 0.0 {
            a.get(i, j) / (d[i] * d[j]).sqrt()
        } else {
            0.0
        };
        0.5 * (if i == j { 1.0 } else { 0.0 } + off)
    })
}

pub fn gcn_degeneration(opts: &VerifyOptions) -> Result<PropertyOutcome> {
    let mut t = Tracker::new("gcn_degeneration", 1e-12);
    for k in 0..opts.instances {
        let rng = &mut instance_rng(opts.seed, 1, k);
        let n = 2 + below(rng, opts.max_n.max(2) - 1);
        let g = random::pairwise_graph(n, 0.3 * uniform01(rng), rng);
        let op = symmetric_under_test(&pairwise_to_hypergraph(&g)?, opts.inject_fault)?;
        t.record(max_abs(&(to_na(&op) - half_gcn_oracle(g.adjacency()))));
    }
    Ok(t.finish())
}

/// Spectral radius ≤ 1 by power iteration and by the eigensolver, plus
/// agreement of the two and positive semi-definiteness.
pub fn spectral(opts: &VerifyOptions) -> Result<[PropertyOutcome; 3]> {
    let mut bound = Tracker::new("spectral_radius_le_1", 1e-9);
    let mut agree = Tracker::new("power_iteration_vs_eigen", 1e-6);
    let mut psd = Tracker::new("symmetric_operator_psd", 1e-10);
    for k in 0..opts.instances {
        let rng = &mut instance_rng(opts.seed, 2, k);
        let hg = random_hypergraph(opts.max_n, rng);
        let op = symmetric_under_test(&hg, opts.inject_fault)?;
        let dense = to_na(&op);
        let eig = SymmetricEigen::new((&dense + dense.transpose()) * 0.5);
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        let low = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let power = spectral_radius(&op, 5000, 1e-13)?.value;
        bound.record((power.max(top) - 1.0).max(0.0));
        agree.record((power - top).abs());
        psd.record((-low).max(0.0));
    }
    Ok([bound.finish(), agree.finish(), psd.finish()])
}

pub fn factorized_matches_naive(opts: &VerifyOptions) -> Result<PropertyOutcome> {
    let mut t = Tracker::new("factorized_equals_naive", 1e-12);
    for k in 0..opts.instances {
        let rng = &mut instance_rng(opts.seed, 3, k);
        let hg = random_hypergraph(opts.max_n, rng);
        let sym = symmetric_under_test(&hg, opts.inject_fault)?;
        let asym = build_asymmetric_transition(&hg, &hg.degrees()?)?.matrix;
        let d1 = max_abs(&(to_na(&sym) - dense_na(&reference::symmetric(&hg)?)));
        let d2 = max_abs(&(to_na(&asym) - dense_na(&reference::asymmetric(&hg)?)));
        t.record(d1.max(d2));
    }
    Ok(t.finish())
}

pub fn asymmetric_row_sums(opts: &VerifyOptions) -> Result<PropertyOutcome> {
    let mut t = Tracker::new("asymmetric_rows_sum_to_1", 1e-12);
    for k in 0..opts.instances {
        let rng = &mut instance_rng(opts.seed, 4, k);
        let hg = random_hypergraph(opts.max_n, rng);
        let op = build_asymmetric_transition(&hg, &hg.degrees()?)?.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..op.n_rows() {
            let s: f64 = op.row(i).1.iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
        t.record(worst);
    }
    Ok(t.finish())
}

pub fn attention_rows(opts: &VerifyOptions) -> Result<PropertyOutcome> {
    let mut t = Tracker::new("attention_rows_sum_to_1", 1e-12);
    for k in 0..opts.instances {
        let rng = &mut instance_rng(opts.seed, 5, k);
        let n = 2 + below(rng, opts.max_n.max(2) - 1);
        let g = random::pairwise_graph(n, 0.2 * uniform01(rng), rng);
        let hg = from_citation_network(&g.edges(), n)?;
        let graph = if k % 2 == 0 {
            AttentionGraph::from_hypergraph(&hg)?
        } else {
            AttentionGraph::from_pairwise(&g)?
        };
        let mut tape = Tape::new();
        let z = tape.constant(random::dense(n, 4, rng));
        let a = tape.param(random::dense(8, 1, rng).scale(3.0));
        let vals = attention_incidence(&mut tape, &graph, z, a, 0.2)?;
        let v = tape.value(vals).as_slice();
        let offsets = graph.pattern().row_offsets();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row = &v[offsets[i]..offsets[i + 1]];
            if row.iter().any(|&x| x < 0.0) {
                worst = f64::INFINITY;
            }
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        t.record(worst);
    }
    Ok(t.finish())
}

/// Twelve vertices, four features in [−1, 1], three classes.
pub fn gradcheck_bundle(seed: u64) -> DatasetBundle {
    let mut rng = seeded(seed);
    let n = 12;
    let links = random::citation_links(n, 18, &mut rng);
    DatasetBundle {
        name: "gradcheck".into(),
        features: random::dense(n, 4, &mut rng),
        labels: (0..n).map(|i| i % 3).collect(),
        class_names: vec!["a".into(), "b".into(), "c".into()],
        structure: Structure::Citations(links),
        split: Split {
            train: (0..6).collect(),
            val: (6..9).collect(),
            test: (9..12).collect(),
        },
    }
}

/// Worst relative error between the analytic gradient of the full model
/// loss (dropout off) and central differences with step `1e-5`.
pub fn model_gradient_error(variant: Variant, skip: bool, seed: u64) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let bundle = gradcheck_bundle(seed);
    let mut config = TrainConfig::for_dataset("synthetic", variant);
    config.model.heads = 2;
    config.model.hidden_per_head = 3;
    config.model.skip = skip;
    let trainer = Trainer::new(&bundle, config)?;
    let model = trainer.initial_model(seed.wrapping_add(1));
    let (_, grads) = trainer.loss_and_gradients(&model)?;
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        let mut numeric = DenseMatrix::zeros(g.rows(), g.cols());
        let mut probe = model.clone();
        for j in 0..g.as_slice().len() {
            let orig = model.params()[k].as_slice()[j];
            probe.params_mut()[k].as_mut_slice()[j] = orig + STEP;
            let plus = trainer.loss_and_gradients(&probe)?.0;
            probe.params_mut()[k].as_mut_slice()[j] = orig - STEP;
            let minus = trainer.loss_and_gradients(&probe)?.0;
            probe.params_mut()[k].as_mut_slice()[j] = orig;
            numeric.as_mut_slice()[j] = (plus - minus) / (2.0 * STEP);
        }
        worst = worst.max(max_relative_error(g, &numeric));
    }
    Ok(worst)
}

pub fn gradients(opts: &VerifyOptions) -> Result<PropertyOutcome> {
    let mut t = Tracker::new("model_gradient_check", 1e-4);
    for variant in Variant::ALL {
        for skip in [false, true] {
            t.record(model_gradient_error(variant, skip, opts.seed)?);
        }
    }
    Ok(t.finish())
}

/// Worst deviation between predictions on a relabeled instance and the
/// relabeled predictions, with identical parameter seeds.
pub fn equivariance_error(variant: Variant, n: usize, seed: u64) -> Result<f64> {
    let rng = &mut seeded(seed);
    let links = random::citation_links(n, 2 * n, rng);
    let features = random::dense(n, 5, rng);
    let perm = random::permutation(n, rng);
    let mut config = TrainConfig::for_dataset("synthetic", variant).model;
    config.heads = 2;
    config.hidden_per_head = 4;
    config.skip = seed % 2 == 1;
    let predict = |links: &[(usize, usize)], x: DenseMatrix| -> Result<DenseMatrix> {
        let bundle = DatasetBundle {
            name: "equivariance".into(),
            features: x,
            labels: vec![0; n],
            class_names: vec!["only".into()],
            structure: Structure::Citations(links.to_vec()),
            split: Split::default(),
        };
        let graphs = bundle.graphs_for(variant)?;
        let model = build_model(config, graphs.inputs(), 5, 3, seed)?;
        Ok(model.predict(&Arc::new(bundle.features))?)
    };
    let base = predict(&links, features.clone())?;
    let moved_links: Vec<_> = links.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    let moved = predict(&moved_links, features.permute_rows(&perm))?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..base.cols() {
            worst = worst.max((base.get(i, j) - moved.get(perm[i], j)).abs());
        }
    }
    Ok(worst)
}

pub fn equivariance(opts: &VerifyOptions) -> Result<PropertyOutcome> {
    let mut t = Tracker::new("permutation_equivariance", 1e-12);
    let per_variant = opts.instances.div_ceil(Variant::ALL.len()).clamp(1, 10);
    for variant in Variant::ALL {
        for k in 0..per_variant {
            let rng = &mut instance_rng(opts.seed, 6, k);
            let n = 2 + below(rng, opts.max_n.clamp(2, 40) - 1);
            t.record(equivariance_error(variant, n, splitmix64(opts.seed ^ k as u64))?);
        }
    }
    Ok(t.finish())
}

/// Every property in a fixed order.
pub fn run_all(opts: &VerifyOptions) -> Result<Vec<PropertyOutcome>> {
    let mut out = vec![gcn_degeneration(opts)?];
    out.extend(spectral(opts)?);
    out.push(factorized_matches_naive(opts)?);
    out.push(asymmetric_row_sums(opts)?);
    out.push(attention_rows(opts)?);
    out.push(gradients(opts)?);
    out.push(equivariance(opts)?);
    Ok(out)
}
