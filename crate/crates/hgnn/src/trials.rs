//! Parallel trial execution and the hidden-width sweep.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hgnn_core::dataset::DatasetBundle;
use hgnn_core::layers::Variant;
use hgnn_core::train::{RunReport, Summary, TrainConfig, Trainer, TrialResult, REPORT_SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CODE_VERSION: &str = concat!("hgnn ", env!("CARGO_PKG_VERSION"));

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs every trial of the trainer's config on up to `threads` workers.
/// Each trial depends only on its index, so results are identical for any
/// thread count; they come back in trial order.
pub fn run_trials(trainer: &Trainer, threads: usize) -> Vec<hgnn_core::Result<TrialResult>> {
    let n = trainer.config().trials;
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return trainer.run_sequential();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<hgnn_core::Result<TrialResult>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                if t >= n {
                    break;
                }
                let outcome = trainer.run_trial(t);
                *slots[t].lock().expect("slot lock") = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every trial ran"))
        .collect()
}

/// Trains all trials and assembles the report.
pub fn run(bundle: &DatasetBundle, config: TrainConfig, threads: usize) -> Result<RunReport> {
    let trainer = Trainer::new(bundle, config)?;
    let outcomes = run_trials(&trainer, threads);
    Ok(RunReport::assemble(&bundle.name, CODE_VERSION, config, outcomes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub width: usize,
    pub gcn_star: Summary,
    pub hyper_conv: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub code_version: String,
    pub dataset: String,
    /// Config shared by every cell; variant and width vary per cell.
    pub config: TrainConfig,
    pub rows: Vec<SweepRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// One single-head run per width for `gcn_star` and `hyper_conv`.
pub fn width_sweep(
    bundle: &DatasetBundle,
    config: TrainConfig,
    widths: &[usize],
    threads: usize,
) -> Result<SweepTable> {
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::Config("widths must be a non-empty list of positive integers".into()));
    }
    let mut base = config;
    base.model.heads = 1;
    let mut rows = Vec::with_capacity(widths.len());
    for &width in widths {
        let cell = |variant: Variant| -> Result<Summary> {
            let mut c = base;
            c.model.variant = variant;
            c.model.hidden_per_head = width;
            Ok(run(bundle, c, threads)?.summary)
        };
        rows.push(SweepRow {
            width,
            gcn_star: cell(Variant::GcnStar)?,
            hyper_conv: cell(Variant::HyperConv)?,
        });
    }
    Ok(SweepTable {
        schema_version: REPORT_SCHEMA_VERSION,
        code_version: CODE_VERSION.into(),
        dataset: bundle.name.clone(),
        config: base,
        rows,
        wall_clock_seconds: None,
    })
}
