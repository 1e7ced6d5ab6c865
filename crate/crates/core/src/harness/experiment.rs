//! Detection runs, score files and parameter sweeps.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;

use crate::engine::{run_stream, EngineConfig, RejectedPoint};
use crate::error::{Error, Result};
use crate::harness::config::KvDocument;
use crate::harness::dataset::{load_csv, subset_start, Dataset};
use crate::harness::scaler::{robust_scale, ScalerParams};
use crate::harness::synth::{synth_stream, SynthSpec};
use crate::metrics::{aggregate_runs, AggregateReport, LabeledScore, MetricsReport};
use crate::scoring::{Normalizer, ScoreRecord};
use crate::seeding::{derive_seed, rng_from};

const SUBSET_STREAM: u64 = 0x5b5e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalingMode {
    /// Fit on the whole dataset before any subset is streamed.
    #[default]
    Offline,
    /// Fit on the bootstrap window of the streamed block only.
    Bootstrap,
    None,
}

impl FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(Self::Offline),
            "bootstrap" => Ok(Self::Bootstrap),
            "none" => Ok(Self::None),
            _ => Err(Error::invalid(format!(
                "scaling must be offline, bootstrap or none, got '{s}'"
            ))),
        }
    }
}

pub fn parse_normalizer(s: &str) -> Result<Normalizer> {
    match s {
        "per-tree" | "per_tree" => Ok(Normalizer::PerTree),
        "window" => Ok(Normalizer::Window),
        _ => Err(Error::invalid(format!(
            "normalizer must be per-tree or window, got '{s}'"
        ))),
    }
}

/// Applies the dataset-wide part of the scaling protocol.
pub fn prepare(dataset: &Dataset, scaling: ScalingMode) -> Result<Dataset> {
    match scaling {
        ScalingMode::Offline => Ok(robust_scale(dataset)?.0),
        ScalingMode::Bootstrap | ScalingMode::None => Ok(dataset.clone()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionOptions {
    pub engine: EngineConfig,
    /// Contiguous block size; `None` streams the whole dataset.
    pub subset_size: Option<usize>,
    pub scaling: ScalingMode,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub records: Vec<ScoreRecord>,
    pub rejected: Vec<RejectedPoint>,
    pub rebuilds: u64,
    /// Offset of the streamed block in the prepared dataset.
    pub subset_start: usize,
    pub metrics: MetricsReport,
}

/// Streams one block of a prepared dataset through the engine.
///
/// Record ordinals are relative to the block. The block is drawn from
/// a stream derived from the engine seed.
pub fn run_detection(prepared: &Dataset, options: &DetectionOptions) -> Result<Detection> {
    let b = options.subset_size.unwrap_or(prepared.len());
    let start = if options.subset_size.is_some() {
        let mut rng = rng_from(options.engine.seed, SUBSET_STREAM);
        subset_start(prepared.len(), b, &mut rng)?
    } else {
        0
    };
    let block = prepared.slice(start, b);

    let rows = if options.scaling == ScalingMode::Bootstrap {
        let w = options.engine.window_size.min(block.len());
        let params = ScalerParams::fit(&block.rows[..w])?;
        params.transform(&block)?.rows
    } else {
        block.rows
    };

    let out = run_stream(&rows, &options.engine)?;

    let labeled: Vec<LabeledScore> = out
        .records
        .iter()
        .map(|r| {
            let label = block
                .labels
                .as_ref()
                .is_some_and(|l| l[r.point_index as usize]);
            LabeledScore::new(r.score, label)
        })
        .collect();
    let latencies: Vec<Duration> = out.records.iter().map(|r| r.latency).collect();
    let mut metrics = MetricsReport::compute(&labeled, &latencies, options.engine.threshold);
    if block.labels.is_none() {
        metrics.auc = None;
    }

    Ok(Detection {
        records: out.records,
        rejected: out.rejected,
        rebuilds: out.rebuilds,
        subset_start: start,
        metrics,
    })
}

/// Formats `x` with exactly `digits` significant digits, no exponent.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.*}", digits.saturating_sub(1));
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const SCORES_HEADER: &str = "point_index,score,is_anomaly,latency_ns";

/// Writes the per-point score table. Latencies are written as 0 unless
/// `record_latency` is set, which keeps the file reproducible.
pub fn write_scores_csv<W: Write>(
    records: &[ScoreRecord],
    mut writer: W,
    record_latency: bool,
) -> Result<()> {
    let mut buf = String::with_capacity(records.len() * 32 + 64);
    buf.push_str(SCORES_HEADER);
    buf.push('\n');
    for r in records {
        let latency = if record_latency {
            r.latency.as_nanos()
        } else {
            0
        };
        let _ = writeln!(
            buf,
            "{},{},{},{}",
            r.point_index,
            format_significant(r.score, 12),
            u8::from(r.is_anomaly),
            latency
        );
    }
    writer.write_all(buf.as_bytes())?;
    writer.flush()?;
    Ok(())
}

/// Everything `detect` needs, resolved from defaults, config and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectSettings {
    pub input: Option<PathBuf>,
    pub label_column: Option<String>,
    pub engine: EngineConfig,
    pub subset_size: Option<usize>,
    pub scaling: ScalingMode,
    pub record_latency: bool,
    pub scores_out: Option<PathBuf>,
    pub metrics_out: Option<PathBuf>,
}

impl Default for DetectSettings {
    fn default() -> Self {
        Self {
            input: None,
            label_column: None,
            engine: EngineConfig::default(),
            subset_size: None,
            scaling: ScalingMode::Offline,
            record_latency: false,
            scores_out: None,
            metrics_out: None,
        }
    }
}

const ENGINE_KEYS: &[&str] = &[
    "num_trees",
    "threshold",
    "seed",
    "sampling",
    "score_initial_window",
    "bin_width",
    "granularity",
    "branching_factor",
    "normalizer",
    "scaling",
    "record_latency",
    "label_column",
    "input",
];

const DETECT_KEYS: &[&str] = &["window_size", "subset_size", "scores_out", "metrics_out"];

fn apply_engine_keys(doc: &KvDocument, engine: &mut EngineConfig) -> Result<()> {
    if let Some(v) = doc.value("num_trees")? {
        engine.num_trees = v;
    }
    if let Some(v) = doc.value("threshold")? {
        engine.threshold = v;
    }
    if let Some(v) = doc.value("seed")? {
        engine.seed = v;
    }
    if let Some(v) = doc.flag("sampling")? {
        engine.sampling_enabled = v;
    }
    if let Some(v) = doc.flag("score_initial_window")? {
        engine.score_initial_window = v;
    }
    if let Some(v) = doc.value("bin_width")? {
        engine.bin_width = v;
    }
    if let Some(v) = doc.value("granularity")? {
        engine.granularity = v;
    }
    if let Some(v) = doc.value("branching_factor")? {
        engine.branching_factor = v;
    }
    if let Some(v) = doc.string("normalizer")? {
        engine.normalizer = parse_normalizer(&v)?;
    }
    Ok(())
}

impl DetectSettings {
    /// Overlays the keys present in `doc`.
    pub fn apply_config(&mut self, doc: &KvDocument) -> Result<()> {
        let known: Vec<&str> = ENGINE_KEYS.iter().chain(DETECT_KEYS).copied().collect();
        doc.reject_unknown(&known)?;
        apply_engine_keys(doc, &mut self.engine)?;
        if let Some(v) = doc.value("window_size")? {
            self.engine.window_size = v;
        }
        if let Some(v) = doc.value("subset_size")? {
            self.subset_size = Some(v);
        }
        if let Some(v) = doc.string("scaling")? {
            self.scaling = v.parse()?;
        }
        if let Some(v) = doc.flag("record_latency")? {
            self.record_latency = v;
        }
        if let Some(v) = doc.string("input")? {
            self.input = Some(resolve(doc.path(), &v));
        }
        if let Some(v) = doc.string("label_column")? {
            self.label_column = Some(v);
        }
        if let Some(v) = doc.string("scores_out")? {
            self.scores_out = Some(resolve(doc.path(), &v));
        }
        if let Some(v) = doc.string("metrics_out")? {
            self.metrics_out = Some(resolve(doc.path(), &v));
        }
        Ok(())
    }

    pub fn detection_options(&self) -> DetectionOptions {
        DetectionOptions {
            engine: self.engine.clone(),
            subset_size: self.subset_size,
            scaling: self.scaling,
        }
    }
}

/// A grid experiment over window sizes, tree counts and subset sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub input: Option<PathBuf>,
    pub label_column: Option<String>,
    /// Used when no input file is given.
    pub synth: Option<SynthSpec>,
    pub window_sizes: Vec<usize>,
    pub tree_counts: Vec<usize>,
    /// Empty streams the whole dataset in every cell.
    pub subset_sizes: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    /// Window size, tree count and seed are overridden per cell and repeat.
    pub engine: EngineConfig,
    pub scaling: ScalingMode,
    pub record_latency: bool,
    pub write_scores: bool,
    pub parallel_cells: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            input: None,
            label_column: None,
            synth: None,
            window_sizes: vec![128],
            tree_counts: vec![60],
            subset_sizes: Vec::new(),
            repeats: 60,
            seed: 0,
            engine: EngineConfig::default(),
            scaling: ScalingMode::Offline,
            record_latency: false,
            write_scores: true,
            parallel_cells: false,
            output_dir: PathBuf::from("sweep-out"),
        }
    }
}

const SWEEP_KEYS: &[&str] = &[
    "window_sizes",
    "window_size",
    "tree_counts",
    "subset_sizes",
    "subset_size",
    "repeats",
    "output_dir",
    "write_scores",
    "parallel_cells",
    "synth_n",
    "synth_dims",
    "synth_outlier_rate",
    "synth_drift_at",
    "synth_drift_shift",
    "synth_seed",
];

impl ExperimentSpec {
    pub fn from_config(doc: &KvDocument) -> Result<Self> {
        let known: Vec<&str> = ENGINE_KEYS.iter().chain(SWEEP_KEYS).copied().collect();
        doc.reject_unknown(&known)?;
        let mut spec = Self::default();
        apply_engine_keys(doc, &mut spec.engine)?;
        spec.seed = spec.engine.seed;

        if let Some(v) = doc.list("window_sizes")?.or(doc.list("window_size")?) {
            spec.window_sizes = v;
        }
        if let Some(v) = doc.list("tree_counts")?.or(doc.list("num_trees")?) {
            spec.tree_counts = v;
        }
        if let Some(v) = doc.list("subset_sizes")?.or(doc.list("subset_size")?) {
            spec.subset_sizes = v;
        }
        if let Some(v) = doc.value("repeats")? {
            spec.repeats = v;
        }
        if let Some(v) = doc.string("scaling")? {
            spec.scaling = v.parse()?;
        }
        if let Some(v) = doc.flag("record_latency")? {
            spec.record_latency = v;
        }
        if let Some(v) = doc.flag("write_scores")? {
            spec.write_scores = v;
        }
        if let Some(v) = doc.flag("parallel_cells")? {
            spec.parallel_cells = v;
        }
        if let Some(v) = doc.string("output_dir")? {
            spec.output_dir = resolve(doc.path(), &v);
        }
        if let Some(v) = doc.string("input")? {
            spec.input = Some(resolve(doc.path(), &v));
        }
        spec.label_column = doc.string("label_column")?;

        if let Some(n) = doc.value::<usize>("synth_n")? {
            let dims = doc.value("synth_dims")?.unwrap_or(6);
            let rate = doc.value("synth_outlier_rate")?.unwrap_or(0.02);
            let seed = doc.value("synth_seed")?.unwrap_or(spec.seed);
            let mut synth = SynthSpec::standard(dims, n, rate, seed);
            if let Some(at) = doc.value("synth_drift_at")? {
                let shift: f64 = doc.value("synth_drift_shift")?.unwrap_or(5.0);
                let mut v = vec![0.0; dims];
                v[0] = shift;
                synth = synth.with_drift(at, v);
            }
            spec.synth = Some(synth);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_sizes.is_empty() || self.tree_counts.is_empty() {
            return Err(Error::invalid(
                "window size and tree count grids must be non-empty",
            ));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.input.is_none() && self.synth.is_none() {
            return Err(Error::invalid("either input or synth_n must be configured"));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match (&self.input, &self.synth) {
            (Some(path), _) => load_csv(path, self.label_column.as_deref()),
            (None, Some(synth)) => synth_stream(synth),
            (None, None) => Err(Error::invalid("no data source configured")),
        }
    }
}

fn resolve(config_path: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        return p;
    }
    match config_path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(p),
        _ => p,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub window_size: usize,
    pub num_trees: usize,
    pub subset_size: usize,
    pub aggregate: Option<AggregateReport>,
    pub failures: Vec<String>,
}

impl CellResult {
    pub fn dir_name(&self) -> String {
        format!(
            "w{}_t{}_b{}",
            self.window_size, self.num_trees, self.subset_size
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub cells: Vec<CellResult>,
}

pub const SUMMARY_HEADER: &str = "window_size,num_trees,subset_size,runs,failures,auc_mean,auc_std,f1_mean,f1_std,precision_mean,recall_mean,mean_latency_ns,p99_latency_ns";

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = write!(out, "{},{},{},", c.window_size, c.num_trees, c.subset_size);
            match &c.aggregate {
                Some(a) => {
                    let auc = |v: f64| {
                        if a.auc.count == 0 {
                            "NA".to_string()
                        } else {
                            format!("{v:.6}")
                        }
                    };
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.0},{:.0}",
                        a.runs,
                        c.failures.len(),
                        auc(a.auc.mean),
                        auc(a.auc.std),
                        a.f1.mean,
                        a.f1.std,
                        a.precision.mean,
                        a.recall.mean,
                        a.mean_latency_ns.mean,
                        a.p99_latency_ns.mean
                    );
                }
                None => {
                    let _ = writeln!(out, "0,{},NA,NA,NA,NA,NA,NA,NA,NA", c.failures.len());
                }
            }
        }
        out
    }
}

/// Seed shared by every cell for repeat `r`, so cells see the same subsets.
pub fn repeat_seed(master: u64, repeat: usize) -> u64 {
    derive_seed(master, repeat as u64)
}

fn run_cell(
    prepared: &Dataset,
    spec: &ExperimentSpec,
    w: usize,
    t: usize,
    b: usize,
) -> Result<CellResult> {
    let mut cell = CellResult {
        window_size: w,
        num_trees: t,
        subset_size: b,
        aggregate: None,
        failures: Vec::new(),
    };
    let dir = spec.output_dir.join(cell.dir_name());
    fs::create_dir_all(&dir)?;

    let mut reports = Vec::with_capacity(spec.repeats);
    for r in 0..spec.repeats {
        let options = DetectionOptions {
            engine: EngineConfig {
                window_size: w,
                num_trees: t,
                seed: repeat_seed(spec.seed, r),
                ..spec.engine.clone()
            },
            subset_size: (b != prepared.len() || !spec.subset_sizes.is_empty()).then_some(b),
            scaling: spec.scaling,
        };
        match run_detection(prepared, &options) {
            Ok(det) => {
                if spec.write_scores {
                    let file = fs::File::create(dir.join(format!("scores_r{r:03}.csv")))?;
                    write_scores_csv(
                        &det.records,
                        std::io::BufWriter::new(file),
                        spec.record_latency,
                    )?;
                }
                fs::write(
                    dir.join(format!("metrics_r{r:03}.txt")),
                    det.metrics.to_kv(),
                )?;
                reports.push(det.metrics);
            }
            Err(e) => {
                log::warn!("cell {} repeat {r} failed: {e}", cell.dir_name());
                cell.failures.push(format!("repeat {r}: {e}"));
            }
        }
    }
    if !cell.failures.is_empty() {
        fs::write(dir.join("failures.txt"), cell.failures.join("\n") + "\n")?;
    }
    if !reports.is_empty() {
        let aggregate = aggregate_runs(&reports)?;
        fs::write(dir.join("summary.txt"), aggregate.to_kv())?;
        cell.aggregate = Some(aggregate);
    }
    Ok(cell)
}

/// Runs every `(w, t, b)` cell, writing per-cell outputs under
/// `spec.output_dir` and a one-row-per-cell `summary.csv`.
///
/// Failing repeats are recorded in the cell and never abort the sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepSummary> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir)?;
    let dataset = spec.load_dataset()?;
    let prepared = prepare(&dataset, spec.scaling)?;
    let subset_sizes = if spec.subset_sizes.is_empty() {
        vec![prepared.len()]
    } else {
        spec.subset_sizes.clone()
    };

    let grid: Vec<(usize, usize, usize)> = spec
        .window_sizes
        .iter()
        .flat_map(|&w| {
            let subset_sizes = &subset_sizes;
            spec.tree_counts
                .iter()
                .flat_map(move |&t| subset_sizes.iter().map(move |&b| (w, t, b)))
        })
        .collect();

    let run = |&(w, t, b): &(usize, usize, usize)| -> Result<CellResult> {
        run_cell(&prepared, spec, w, t, b)
    };
    let cells = if spec.parallel_cells {
        grid.par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        grid.iter().map(run).collect::<Result<Vec<_>>>()?
    };

    let summary = SweepSummary { cells };
    fs::write(spec.output_dir.join("summary.csv"), summary.to_csv())?;
    Ok(summary)
}
