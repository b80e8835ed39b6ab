//! Acceptance criteria, one line each. Criteria needing real datasets look
//! for bundle manifests under `$HGNN_DATA_ROOT/<name>/manifest.json` and are
//! skipped with a reason when absent. Set `HGNN_ACCEPTANCE_TRIALS` to change
//! the trial count for those (default 20).

mod common;

use std::path::PathBuf;
use std::process::ExitCode;

use hgnn::bench;
use hgnn::core::dataset::DatasetBundle;
use hgnn::core::layers::Variant;
use hgnn::core::train::{TrainConfig, Trainer};
use hgnn::manifest::{load_bundle, SplitSpec, DATA_ROOT_ENV};
use hgnn::report;
use hgnn::trials;
use hgnn::verify::{self, PropertyOutcome, VerifyOptions};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Outcome {
    id: &'static str,
    title: &'static str,
    verdict: Verdict,
}

fn from_property(p: &PropertyOutcome) -> Verdict {
    let detail = format!(
        "{} instances, max deviation {:.3e}, tolerance {:.0e}",
        p.instances, p.max_deviation, p.tolerance
    );
    if p.passed {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn trials_requested() -> usize {
    std::env::var("HGNN_ACCEPTANCE_TRIALS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&t: &usize| t >= 1)
        .unwrap_or(20)
}

/// Loads `$HGNN_DATA_ROOT/<name>`, or explains why it cannot.
fn dataset(name: &str, need_split_files: bool) -> Result<DatasetBundle, String> {
    let Some(root) = std::env::var_os(DATA_ROOT_ENV) else {
        return Err(format!("${DATA_ROOT_ENV} not set; {name} bundle unavailable"));
    };
    let path = PathBuf::from(root).join(name).join("manifest.json");
    if !path.is_file() {
        return Err(format!("{} not found", path.display()));
    }
    let loaded = load_bundle(&path).map_err(|e| format!("{name}: {e}"))?;
    if need_split_files && !matches!(loaded.manifest.split, SplitSpec::Files { .. }) {
        return Err(format!("{name}: targets apply to the canonical split files"));
    }
    Ok(loaded.bundle)
}

/// Mean test accuracy in percent.
fn mean_accuracy(bundle: &DatasetBundle, config: TrainConfig) -> Result<f64, String> {
    let report = trials::run(bundle, config, trials::default_threads()).map_err(|e| e.to_string())?;
    Ok(100.0 * report.summary.mean)
}

fn config(bundle: &DatasetBundle, variant: Variant) -> TrainConfig {
    let mut c = TrainConfig::for_dataset(&bundle.name, variant);
    c.trials = trials_requested();
    c
}

fn within(label: &str, got: f64, target: f64, tol: f64) -> (bool, String) {
    let ok = (got - target).abs() <= tol;
    (ok, format!("{label} {got:.2} (target {target} ± {tol})"))
}

fn table_reproduction() -> Verdict {
    let targets: [(&str, &[(Variant, f64)]); 2] = [
        (
            "cora",
            &[
                (Variant::GcnStar, 81.80),
                (Variant::HyperConv, 82.19),
                (Variant::GatStar, 82.43),
                (Variant::HyperAtten, 82.61),
                (Variant::GcnPlusHyperconv, 82.63),
            ],
        ),
        (
            "citeseer",
            &[
                (Variant::GcnStar, 70.29),
                (Variant::HyperConv, 70.35),
                (Variant::GatStar, 70.02),
                (Variant::HyperAtten, 70.88),
            ],
        ),
    ];
    let mut all_ok = true;
    let mut details = Vec::new();
    for (name, rows) in targets {
        let bundle = match dataset(name, true) {
            Ok(b) => b,
            Err(reason) => return Verdict::Skip(reason),
        };
        for &(variant, target) in rows {
            match mean_accuracy(&bundle, config(&bundle, variant)) {
                Ok(acc) => {
                    let (ok, d) = within(&format!("{name}/{variant}"), acc, target, 1.0);
                    all_ok &= ok;
                    details.push(d);
                }
                Err(e) => return Verdict::Fail(format!("{name}/{variant}: {e}")),
            }
        }
    }
    check(all_ok, details.join("; "))
}

fn skip_connection_spot_check() -> Verdict {
    let mut all_ok = true;
    let mut details = Vec::new();
    for (name, target) in [("cora", 82.66), ("citeseer", 70.83)] {
        let bundle = match dataset(name, true) {
            Ok(b) => b,
            Err(reason) => return Verdict::Skip(reason),
        };
        let mut c = config(&bundle, Variant::HyperConv);
        c.model.skip = true;
        c.weight_decay = 1e-3;
        match mean_accuracy(&bundle, c) {
            Ok(acc) => {
                let (ok, d) = within(name, acc, target, 1.0);
                all_ok &= ok;
                details.push(d);
            }
            Err(e) => return Verdict::Fail(e),
        }
    }
    check(all_ok, details.join("; "))
}

fn width_trend() -> Verdict {
    let bundle = match dataset("cora", true) {
        Ok(b) => b,
        Err(reason) => return Verdict::Skip(reason),
    };
    let c = config(&bundle, Variant::HyperConv);
    let table = match trials::width_sweep(&bundle, c, &[2, 4, 16], trials::default_threads()) {
        Ok(t) => t,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let gap = |i: usize| 100.0 * (table.rows[i].hyper_conv.mean - table.rows[i].gcn_star.mean);
    let (ok16, d16) = within("width 16 hyper_conv", 100.0 * table.rows[2].hyper_conv.mean, 82.1, 1.0);
    let ok = gap(0) >= 2.0 && gap(1) >= 0.5 && ok16;
    check(
        ok,
        format!("gap at width 2 {:.2} (≥ 2.0), width 4 {:.2} (≥ 0.5), {d16}", gap(0), gap(1)),
    )
}

fn occurrence_comparison() -> Verdict {
    let bundle = match dataset("20news", false) {
        Ok(b) => b,
        Err(reason) => return Verdict::Skip(reason),
    };
    let hyper = mean_accuracy(&bundle, config(&bundle, Variant::HyperConv));
    let gcn = mean_accuracy(&bundle, config(&bundle, Variant::GcnStar));
    match (hyper, gcn) {
        (Ok(h), Ok(g)) => {
            let (ok, d) = within("hyper_conv", h, 61.7, 2.0);
            check(ok && h - g >= 3.0, format!("{d}, gap over gcn_star {:.2} (≥ 3.0)", h - g))
        }
        (Err(e), _) | (_, Err(e)) => Verdict::Fail(e),
    }
}

fn pubmed_attention() -> Verdict {
    let bundle = match dataset("pubmed", true) {
        Ok(b) => b,
        Err(reason) => return Verdict::Skip(reason),
    };
    match mean_accuracy(&bundle, config(&bundle, Variant::HyperAtten)) {
        Ok(acc) => {
            let (ok, d) = within("hyper_atten", acc, 78.4, 1.0);
            check(ok, d)
        }
        Err(e) => Verdict::Fail(e),
    }
}

fn gradient_checks() -> Verdict {
    let mut worst: f64 = 0.0;
    for variant in Variant::ALL {
        for skip in [false, true] {
            match verify::model_gradient_error(variant, skip, 3) {
                Ok(e) => worst = worst.max(e),
                Err(e) => return Verdict::Fail(format!("{variant}: {e}")),
            }
        }
    }
    check(
        worst < 1e-4,
        format!("{} variants with and without skip, max relative error {worst:.3e} (< 1e-4)", Variant::ALL.len()),
    )
}

fn determinism_across_threads() -> Verdict {
    let bundle = common::synthetic_citations(90, 3, 15, 11, common::small_sizes());
    let mut reports = Vec::new();
    for variant in Variant::ALL {
        let mut c = TrainConfig::for_dataset(&bundle.name, variant);
        c.model.heads = 2;
        c.model.hidden_per_head = 4;
        c.max_epochs = 25;
        c.patience = 10;
        c.trials = 4;
        c.seed = 5;
        let trainer = match Trainer::new(&bundle, c) {
            Ok(t) => t,
            Err(e) => return Verdict::Fail(format!("{variant}: {e}")),
        };
        let mut texts = Vec::new();
        for threads in [1, 2, 4] {
            let outcomes = trials::run_trials(&trainer, threads);
            let report = hgnn::core::train::RunReport::assemble(&bundle.name, trials::CODE_VERSION, c, outcomes);
            match report {
                Ok(r) => texts.push(report::to_json(&r).expect("serializes") + &report::run_text(&r)),
                Err(e) => return Verdict::Fail(format!("{variant}: {e}")),
            }
        }
        if texts.windows(2).any(|w| w[0] != w[1]) {
            return Verdict::Fail(format!("{variant}: reports differ between thread counts"));
        }
        reports.push(texts.swap_remove(0));
    }
    Verdict::Pass(format!(
        "{} variants × 4 trials, byte-identical reports at 1, 2 and 4 threads",
        reports.len()
    ))
}

fn bench_ratio() -> Verdict {
    let hg = bench::instance(2708, 5.0, 0);
    let mean_card = hg.incidence().nnz() as f64 / hg.n_hyperedges() as f64;
    let small = bench::instance(64, 5.0, 0);
    let agreement = match bench::agreement(&small) {
        Ok(d) => d,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    match bench::time_construction(&hg, 5, 1) {
        Ok(row) => check(
            row.ratio >= 10.0 && agreement <= 1e-12,
            format!(
                "N=M=2708, mean cardinality {mean_card:.2}: factorized {:.3e} s, naive {:.3e} s, ratio {:.1} (≥ 10); agreement at 64 {agreement:.1e}",
                row.t_factorized, row.t_naive, row.ratio
            ),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn main() -> ExitCode {
    let opts = VerifyOptions {
        instances: 100,
        max_n: 64,
        seed: 2024,
        inject_fault: false,
    };
    let mut outcomes = Vec::new();
    let mut push = |id, title, verdict| outcomes.push(Outcome { id, title, verdict });

    push("1", "citation benchmark accuracies", table_reproduction());
    push("2", "skip connection with larger decay", skip_connection_spot_check());
    push("3", "hidden width trend with one head", width_trend());
    push("4", "occurrence data against clique GCN", occurrence_comparison());
    push("5", "pubmed hypergraph attention", pubmed_attention());

    let fail = |e: hgnn::Error| Verdict::Fail(e.to_string());
    push(
        "6a",
        "GCN degeneration identity",
        verify::gcn_degeneration(&opts).map_or_else(fail, |p| from_property(&p)),
    );
    match verify::spectral(&opts) {
        Ok([bound, agree, psd]) => {
            let ok = bound.passed && agree.passed && psd.passed;
            push(
                "6b",
                "spectral radius bound",
                check(
                    ok,
                    format!(
                        "{} instances, excess over 1 {:.1e} (≤ 1e-9), power vs eigensolver {:.1e}, min eigenvalue deficit {:.1e}",
                        bound.instances, bound.max_deviation, agree.max_deviation, psd.max_deviation
                    ),
                ),
            );
        }
        Err(e) => push("6b", "spectral radius bound", fail(e)),
    }
    push(
        "6c",
        "factorized equals naive construction",
        verify::factorized_matches_naive(&opts).map_or_else(fail, |p| from_property(&p)),
    );
    push("6d", "full-model gradient checks", gradient_checks());
    push(
        "6e",
        "attention rows sum to one",
        verify::attention_rows(&opts).map_or_else(fail, |p| from_property(&p)),
    );
    push(
        "6f",
        "permutation equivariance",
        verify::equivariance(&opts).map_or_else(fail, |p| from_property(&p)),
    );
    push("6g", "determinism across thread counts", determinism_across_threads());
    push("7", "factorized construction speedup", bench_ratio());

    let mut failed = 0;
    for o in &outcomes {
        let (tag, detail) = match &o.verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{:>2}] {}: {detail}", o.id, o.title);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
