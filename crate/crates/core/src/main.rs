use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dlshiforest::harness::{
    load_csv, prepare, robust_scale, run_detection, run_experiment, synth_stream, write_scores_csv,
    DetectSettings, ExperimentSpec, KvDocument, ScalerParams, ScalingMode, SynthSpec,
};
use dlshiforest::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dlshiforest",
    version,
    about = "Streaming anomaly detection with LSH isolation forests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a CSV stream point by point.
    Detect(DetectArgs),
    /// Run a grid experiment described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a labeled synthetic stream.
    Synth(SynthArgs),
    /// Fit and apply a median/IQR scaler.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// Flat key=value file; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    num_trees: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stream a random contiguous block of this many rows.
    #[arg(long)]
    subset_size: Option<usize>,
    /// Build every tree from the whole window.
    #[arg(long)]
    no_sampling: bool,
    /// Also score the bootstrap window against the initial model.
    #[arg(long)]
    score_initial_window: bool,
    /// Defaults to stdout.
    #[arg(long)]
    scores_out: Option<PathBuf>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    bin_width: Option<f64>,
    /// offline, bootstrap or none.
    #[arg(long)]
    scaling: Option<ScalingMode>,
    /// Write measured latencies instead of zeros in the scores file.
    #[arg(long)]
    record_latency: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    dims: usize,
    #[arg(long, default_value_t = 0.02)]
    outlier_rate: f64,
    /// Ordinal at which the inlier mean shifts.
    #[arg(long)]
    drift_at: Option<usize>,
    /// Shift applied to dimension 0.
    #[arg(long, default_value_t = 5.0)]
    drift_shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Passed through unscaled.
    #[arg(long)]
    label_column: Option<String>,
    /// Save the fitted medians and IQRs.
    #[arg(long)]
    params_out: Option<PathBuf>,
    /// Apply previously saved parameters instead of fitting.
    #[arg(long)]
    params: Option<PathBuf>,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn detect(args: DetectArgs) -> Result<()> {
    let mut settings = DetectSettings::default();
    if let Some(path) = &args.config {
        settings.apply_config(&KvDocument::load(path)?)?;
    }
    if args.input.is_some() {
        settings.input = args.input;
    }
    if args.label_column.is_some() {
        settings.label_column = args.label_column;
    }
    if let Some(v) = args.window_size {
        settings.engine.window_size = v;
    }
    if let Some(v) = args.num_trees {
        settings.engine.num_trees = v;
    }
    if let Some(v) = args.threshold {
        settings.engine.threshold = v;
    }
    if let Some(v) = args.seed {
        settings.engine.seed = v;
    }
    if args.subset_size.is_some() {
        settings.subset_size = args.subset_size;
    }
    if args.no_sampling {
        settings.engine.sampling_enabled = false;
    }
    if args.score_initial_window {
        settings.engine.score_initial_window = true;
    }
    if args.scores_out.is_some() {
        settings.scores_out = args.scores_out;
    }
    if args.metrics_out.is_some() {
        settings.metrics_out = args.metrics_out;
    }
    if let Some(v) = args.bin_width {
        settings.engine.bin_width = v;
    }
    if let Some(v) = args.scaling {
        settings.scaling = v;
    }
    if args.record_latency {
        settings.record_latency = true;
    }

    let input = settings
        .input
        .clone()
        .ok_or_else(|| Error::InvalidArgument("no input file given".into()))?;
    let dataset = load_csv(&input, settings.label_column.as_deref())?;
    let prepared = prepare(&dataset, settings.scaling)?;
    let detection = run_detection(&prepared, &settings.detection_options())?;

    for r in &detection.rejected {
        log::warn!("skipped point {}: {}", r.ordinal, r.reason);
    }
    write_scores_csv(
        &detection.records,
        output(settings.scores_out.as_ref())?,
        settings.record_latency,
    )?;
    let metrics = detection.metrics.to_kv();
    match &settings.metrics_out {
        Some(path) => std::fs::write(path, metrics)?,
        None => eprint!("{metrics}"),
    }
    log::info!(
        "scored {} points from offset {}, {} rebuilds",
        detection.records.len(),
        detection.subset_start,
        detection.rebuilds
    );
    Ok(())
}

fn sweep(config: PathBuf) -> Result<()> {
    let spec = ExperimentSpec::from_config(&KvDocument::load(&config)?)?;
    let summary = run_experiment(&spec)?;
    let failed: usize = summary.cells.iter().map(|c| c.failures.len()).sum();
    eprintln!(
        "{} cells written to {}, {failed} failed repeats",
        summary.cells.len(),
        spec.output_dir.display()
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::standard(args.dims, args.n, args.outlier_rate, args.seed);
    if let Some(at) = args.drift_at {
        let mut shift = vec![0.0; args.dims];
        if let Some(first) = shift.first_mut() {
            *first = args.drift_shift;
        }
        spec = spec.with_drift(at, shift);
    }
    let dataset = synth_stream(&spec)?;
    dataset.write_csv(output(args.out.as_ref())?, &args.label_column)
}

fn scale(args: ScaleArgs) -> Result<()> {
    let dataset = load_csv(&args.input, args.label_column.as_deref())?;
    let (scaled, params) = match &args.params {
        Some(path) => {
            let params = ScalerParams::read_csv(File::open(path)?)?;
            (params.transform(&dataset)?, params)
        }
        None => robust_scale(&dataset)?,
    };
    if let Some(path) = &args.params_out {
        params.write_csv(File::create(path)?, &dataset.column_names)?;
    }
    let label = args.label_column.as_deref().unwrap_or("label");
    scaled.write_csv(output(args.out.as_ref())?, label)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(args) => detect(args),
        Command::Sweep { config } => sweep(config),
        Command::Synth(args) => synth(args),
        Command::Scale(args) => scale(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
