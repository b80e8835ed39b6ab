use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hgnn::bench::{self, CSV_HEADER};
use hgnn::convert::{self, ConvertInput, ConvertOptions, SplitSource};
use hgnn::core::dataset::SplitSizes;
use hgnn::core::layers::Variant;
use hgnn::core::train::TrainConfig;
use hgnn::core::transition::Normalization;
use hgnn::manifest::{self, Preprocessing};
use hgnn::trials::{self, CODE_VERSION};
use hgnn::verify::{self, VerifyOptions};
use hgnn::{io, report, Error, Result};
use serde::Serialize;

/// Hypergraph convolution and attention for semi-supervised node
/// classification.
#[derive(Debug, Parser)]
#[command(name = "hgnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and evaluate one variant over several trials.
    Train(TrainArgs),
    /// Hidden-width sweep of gcn_star against hyper_conv with one head.
    Sweep(SweepArgs),
    /// Check operator and model invariants on random instances.
    Verify(VerifyArgs),
    /// Time factorized against naive operator construction.
    Bench(BenchArgs),
    /// Normalize raw dataset files and write a manifest.
    Convert(ConvertArgs),
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
        format!("unknown variant `{s}`; valid variants: {}", names.join(", "))
    })
}

fn parse_normalization(s: &str) -> std::result::Result<Normalization, String> {
    match s {
        "symmetric" => Ok(Normalization::Symmetric),
        "asymmetric" => Ok(Normalization::Asymmetric),
        _ => Err(format!("unknown normalization `{s}`; valid: symmetric, asymmetric")),
    }
}

/// Overrides of the dataset's protocol defaults.
#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long, value_parser = parse_variant, default_value = "hyper_conv")]
    variant: Variant,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    decay_attention: Option<bool>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    heads: Option<usize>,
    /// Hidden units per head.
    #[arg(long)]
    hidden: Option<usize>,
    /// Layers including the output layer.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    skip: Option<bool>,
    #[arg(long)]
    input_dropout: Option<f64>,
    #[arg(long)]
    attention_dropout: Option<f64>,
    #[arg(long)]
    leaky_slope: Option<f64>,
    #[arg(long, value_parser = parse_normalization)]
    normalization: Option<Normalization>,
}

impl ConfigArgs {
    fn resolve(&self, dataset: &str) -> Result<TrainConfig> {
        let mut c = TrainConfig::for_dataset(dataset, self.variant);
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$field { c.$($target).+ = v; })*
            };
        }
        set!(
            lr => lr,
            weight_decay => weight_decay,
            decay_attention => decay_attention,
            patience => patience,
            max_epochs => max_epochs,
            trials => trials,
            seed => seed,
            heads => model.heads,
            hidden => model.hidden_per_head,
            depth => model.depth,
            skip => model.skip,
            input_dropout => model.input_dropout,
            attention_dropout => model.attention_dropout,
            leaky_slope => model.leaky_slope,
            normalization => model.conv_normalization,
        );
        c.validate()?;
        if c.patience > c.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                c.patience, c.max_epochs
            )));
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Bundle manifest, or a directory holding `manifest.json`.
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Worker threads for trials; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Write the JSON report here and the text table next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock time in the report.
    #[arg(long)]
    record_timing: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8, 16, 32, 64])]
    widths: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 64)]
    max_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [64usize, 256, 1024, 2708])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 5.0)]
    cardinality: f64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    naive_repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature width for the forward-latency measurement.
    #[arg(long, default_value_t = 1433)]
    features: usize,
    #[arg(long, default_value_t = 7)]
    classes: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["content", "matrix", "from_manifest"])))]
struct ConvertArgs {
    /// Dataset name; names the output files.
    #[arg(long, required_unless_present = "from_manifest")]
    name: Option<String>,
    #[arg(long, requires = "cites")]
    content: Option<PathBuf>,
    #[arg(long)]
    cites: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    matrix: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    n_features: Option<usize>,
    /// Re-convert the files an existing manifest names.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Directory with `train.idx`, `val.idx` and `test.idx`.
    #[arg(long)]
    split_dir: Option<PathBuf>,
    #[arg(long, default_value_t = SplitSizes::default().train_per_class)]
    train_per_class: usize,
    #[arg(long, default_value_t = SplitSizes::default().val)]
    val_size: usize,
    #[arg(long, default_value_t = SplitSizes::default().test)]
    test_size: usize,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    no_row_normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

fn print_header(config: &impl Serialize) {
    print!("{}", report::header(CODE_VERSION, config));
}

fn load(args: &RunArgs) -> Result<(hgnn::core::dataset::DatasetBundle, TrainConfig, usize)> {
    let loaded = manifest::load_bundle(&args.manifest)?;
    let config = args.config.resolve(&loaded.bundle.name)?;
    let threads = args.threads.unwrap_or_else(trials::default_threads);
    if threads == 0 {
        return Err(Error::Config("threads must be positive".into()));
    }
    Ok((loaded.bundle, config, threads))
}

fn emit(args: &RunArgs, json: String, text: String) -> Result<()> {
    if let Some(out) = &args.out {
        report::write_pair(out, &json, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<u8> {
    let args = args.run;
    let (bundle, config, threads) = load(&args)?;
    let start = Instant::now();
    let mut run = trials::run(&bundle, config, threads)?;
    if args.record_timing {
        run.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    emit(&args, report::to_json(&run)?, report::run_text(&run))?;
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let (bundle, config, threads) = load(&args.run)?;
    let start = Instant::now();
    let mut table = trials::width_sweep(&bundle, config, &args.widths, threads)?;
    if args.run.record_timing {
        table.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    emit(&args.run, report::to_json(&table)?, report::sweep_text(&table))?;
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    if args.instances == 0 || args.max_n < 2 {
        return Err(Error::Config("need at least one instance and max-n of at least 2".into()));
    }
    print_header(&args);
    let outcomes = verify::run_all(&VerifyOptions {
        instances: args.instances,
        max_n: args.max_n,
        seed: args.seed,
        inject_fault: args.inject_fault,
    })?;
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        println!("{failed} of {} properties failed", outcomes.len());
        return Ok(1);
    }
    println!("all {} properties passed", outcomes.len());
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<u8> {
    if args.sizes.is_empty() || args.sizes.contains(&0) || args.repeats == 0 || args.naive_repeats == 0 {
        return Err(Error::Config("sizes and repeat counts must be positive".into()));
    }
    print_header(&args);
    let check = bench::instance(64, args.cardinality, args.seed);
    println!("# agreement at n=m=64: max deviation {:.3e}", bench::agreement(&check)?);
    let mut csv = format!("{CSV_HEADER}\n");
    for &n in &args.sizes {
        let hg = bench::instance(n, args.cardinality, args.seed);
        let row = bench::time_construction(&hg, args.repeats, args.naive_repeats)?;
        csv.push_str(&row.csv());
        csv.push('\n');
    }
    let largest = *args.sizes.iter().max().expect("non-empty");
    let hg = bench::instance(largest, args.cardinality, args.seed);
    let latency = bench::forward_latency(&hg, args.features, args.classes, args.repeats, args.seed)?;
    match &args.out {
        Some(path) => io::write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    println!("# forward pass n={largest}: {:.3} ms (informational)", latency * 1e3);
    Ok(0)
}

fn cmd_convert(args: ConvertArgs) -> Result<u8> {
    print_header(&args);
    let opts = match &args.from_manifest {
        Some(m) => ConvertOptions::from_manifest(m, args.out.clone())?,
        None => {
            let input = match (&args.content, &args.cites, &args.matrix, &args.labels) {
                (Some(content), Some(cites), None, None) => ConvertInput::Citation {
                    content: content.clone(),
                    cites: cites.clone(),
                },
                (None, None, Some(matrix), Some(labels)) => ConvertInput::Occurrence {
                    matrix: matrix.clone(),
                    labels: labels.clone(),
                    n_features: args.n_features,
                },
                _ => {
                    return Err(Error::Config(
                        "give either --content/--cites or --matrix/--labels".into(),
                    ))
                }
            };
            let split = match &args.split_dir {
                Some(dir) => SplitSource::Files(dir.clone()),
                None => SplitSource::Deterministic {
                    sizes: SplitSizes {
                        train_per_class: args.train_per_class,
                        val: args.val_size,
                        test: args.test_size,
                    },
                    seed: args.split_seed,
                },
            };
            ConvertOptions {
                name: args.name.clone().expect("required by clap"),
                input,
                split,
                out_dir: args.out.clone(),
                preprocessing: Preprocessing {
                    row_normalize: !args.no_row_normalize,
                },
            }
        }
    };
    let outcome = convert::convert(&opts)?;
    println!("{}", outcome.census);
    if outcome.written.is_empty() {
        println!("unchanged: {}", outcome.manifest_path.display());
    } else {
        for p in &outcome.written {
            println!("wrote {}", p.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
