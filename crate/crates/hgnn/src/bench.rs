//! Construction-time comparison of the factorized and the literal dense
//! transition builders, plus forward-pass latency.

use std::sync::Arc;
use std::time::Instant;

use hgnn_core::hypergraph::Hypergraph;
use hgnn_core::layers::{build_model, GraphInputs, ModelConfig, Variant};
use hgnn_core::rng::seeded;
use hgnn_core::transition::{build_symmetric_transition, reference};
use hgnn_core::{random, DenseMatrix};

use crate::error::Result;

pub const CSV_HEADER: &str = "n,m,density,t_factorized,t_naive,ratio";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    /// Fraction of nonzero incidence entries.
    pub density: f64,
    /// Seconds, best of the repeats.
    pub t_factorized: f64,
    pub t_naive: f64,
    pub ratio: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.6},{:.6e},{:.6e},{:.2}",
            self.n, self.m, self.density, self.t_factorized, self.t_naive, self.ratio
        )
    }
}

/// Random unit-weight hypergraph with `n` vertices and hyperedges.
pub fn instance(n: usize, mean_cardinality: f64, seed: u64) -> Hypergraph {
    random::hypergraph(n, n, mean_cardinality, &mut seeded(seed))
}

fn best_of<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let out = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    Ok((best, last.expect("at least one repeat")))
}

/// Times both builders on one instance. The naive builder runs
/// `naive_repeats` times, the factorized one `repeats` times.
pub fn time_construction(hg: &Hypergraph, repeats: usize, naive_repeats: usize) -> Result<BenchRow> {
    let (t_factorized, _) = best_of(repeats, || {
        Ok(build_symmetric_transition(hg, &hg.degrees()?)?)
    })?;
    let (t_naive, _) = best_of(naive_repeats, || Ok(reference::symmetric(hg)?))?;
    let (n, m) = (hg.n_vertices(), hg.n_hyperedges());
    Ok(BenchRow {
        n,
        m,
        density: hg.incidence().nnz() as f64 / (n * m) as f64,
        t_factorized,
        t_naive,
        ratio: t_naive / t_factorized,
    })
}

/// Largest entrywise difference between the two builders.
pub fn agreement(hg: &Hypergraph) -> Result<f64> {
    let fast = build_symmetric_transition(hg, &hg.degrees()?)?.matrix.to_dense();
    let slow = reference::symmetric(hg)?;
    Ok(fast.max_abs_diff(&slow))
}

/// Seconds for one evaluation-mode forward pass of `hyper_conv` with the
/// default widths, best of `repeats`.
pub fn forward_latency(hg: &Hypergraph, n_features: usize, n_classes: usize, repeats: usize, seed: u64) -> Result<f64> {
    let graphs = GraphInputs {
        hypergraph: Some(hg),
        pairwise: None,
    };
    let model = build_model(ModelConfig::new(Variant::HyperConv), graphs, n_features, n_classes, seed)?;
    let features: Arc<DenseMatrix> =
        Arc::new(random::binary_features(hg.n_vertices(), n_features, 0.013, &mut seeded(seed ^ 1)));
    let (t, _) = best_of(repeats, || Ok(model.predict(&features)?))?;
    Ok(t)
}
