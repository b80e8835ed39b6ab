//! Report rendering: pretty JSON for machines, aligned text for people.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hgnn_core::train::{RunReport, Summary};
use serde::Serialize;

use crate::error::Result;
use crate::io;
use crate::trials::SweepTable;

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `code version` and resolved config lines that head every text output.
pub fn header(code_version: &str, config: &impl Serialize) -> String {
    format!(
        "# {code_version}\n# config {}\n",
        serde_json::to_string(config).expect("config serializes")
    )
}

fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn mean_pm_std(s: &Summary) -> String {
    format!("{} ± {}", percent(s.mean), percent(s.std))
}

pub fn run_text(report: &RunReport) -> String {
    let mut out = header(&report.code_version, &report.config);
    let _ = writeln!(out, "# dataset {}  variant {}", report.dataset, report.config.model.variant);
    let _ = writeln!(
        out,
        "{:>5}  {:>20}  {:>10}  {:>6}  {:>12}  {:>7}  {:>8}",
        "trial", "seed", "best_epoch", "epochs", "val_loss", "val_acc", "test_acc"
    );
    for t in &report.trials {
        let _ = writeln!(
            out,
            "{:>5}  {:>20}  {:>10}  {:>6}  {:>12.6}  {:>7}  {:>8}",
            t.trial,
            t.seed,
            t.best_epoch,
            t.epochs_run,
            t.best_val_loss,
            percent(t.val_accuracy),
            percent(t.test_accuracy)
        );
    }
    for d in &report.diverged {
        let _ = writeln!(out, "{:>5}  diverged at epoch {}", d.trial, d.epoch);
    }
    let _ = writeln!(
        out,
        "test accuracy {}  (completed {}, diverged {})",
        mean_pm_std(&report.summary),
        report.summary.completed,
        report.summary.diverged
    );
    if let Some(s) = report.wall_clock_seconds {
        let _ = writeln!(out, "wall clock {s:.3} s");
    }
    out
}

pub fn sweep_text(table: &SweepTable) -> String {
    let mut out = header(&table.code_version, &table.config);
    let _ = writeln!(out, "# dataset {}  heads 1", table.dataset);
    let _ = writeln!(out, "{:>6}  {:>16}  {:>16}", "width", "gcn_star", "hyper_conv");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{:>6}  {:>16}  {:>16}",
            r.width,
            mean_pm_std(&r.gcn_star),
            mean_pm_std(&r.hyper_conv)
        );
    }
    if let Some(s) = table.wall_clock_seconds {
        let _ = writeln!(out, "wall clock {s:.3} s");
    }
    out
}

/// Text companion of a JSON output path: `run.json` → `run.txt`.
pub fn text_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("txt")
}

/// Writes the JSON and text forms atomically.
pub fn write_pair(json_path: &Path, json: &str, text: &str) -> Result<()> {
    io::write_atomic(json_path, json.as_bytes())?;
    io::write_atomic(&text_path(json_path), text.as_bytes())
}
