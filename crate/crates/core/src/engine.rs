//! The streaming detection loop.
//!
//! The first `w` points bootstrap a forest. Every later point is scored
//! against the current forest and then appended to the window; when the
//! window holds `w` points a new forest is built from exactly those points
//! and the window is cleared. Blocks never overlap, so a point is only ever
//! scored by a model built from earlier blocks.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::forest::{Forest, ForestConfig};
use crate::lsh::DEFAULT_BIN_WIDTH;
use crate::scoring::{anomaly_score, classify, Normalizer, ScoreParams, ScoreRecord};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub window_size: usize,
    pub num_trees: usize,
    pub threshold: f64,
    pub seed: u64,
    /// Also score the bootstrap points against the initial model.
    pub score_initial_window: bool,
    pub sampling_enabled: bool,
    pub bin_width: f64,
    pub granularity: f64,
    pub branching_factor: usize,
    pub normalizer: Normalizer,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            window_size: 128,
            num_trees: 60,
            threshold: crate::scoring::DEFAULT_THRESHOLD,
            seed: 0,
            score_initial_window: false,
            sampling_enabled: true,
            bin_width: DEFAULT_BIN_WIDTH,
            granularity: 1.0,
            branching_factor: 2,
            normalizer: Normalizer::PerTree,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(Error::invalid(format!(
                "window size must be at least 2, got {}",
                self.window_size
            )));
        }
        if self.num_trees == 0 {
            return Err(Error::invalid("number of trees must be at least 1"));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::invalid(format!(
                "bin width must be positive, got {}",
                self.bin_width
            )));
        }
        self.score_params().validate()
    }

    pub fn score_params(&self) -> ScoreParams {
        ScoreParams {
            branching_factor: self.branching_factor,
            granularity: self.granularity,
            threshold: self.threshold,
            normalizer: self.normalizer,
        }
    }

    /// Forest configuration for the model built at `epoch` (0 = bootstrap).
    pub fn forest_config(&self, epoch: u64) -> ForestConfig {
        ForestConfig {
            num_trees: self.num_trees,
            seed: derive_seed(self.seed, epoch),
            sampling_enabled: self.sampling_enabled,
            bin_width: self.bin_width,
        }
    }
}

/// Fixed-capacity block of points received since the last rebuild.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    buffer: Vec<Vec<f64>>,
    capacity: usize,
}

impl Window {
    pub fn new(capacity: usize) -> Self {
        Self {
            buffer: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.buffer
    }

    fn push(&mut self, x: Vec<f64>) {
        debug_assert!(!self.is_full());
        self.buffer.push(x);
    }

    fn clear(&mut self) {
        self.buffer.clear();
    }
}

fn check_point(x: &[f64], dimensionality: usize) -> Result<()> {
    if x.len() != dimensionality {
        return Err(Error::DimensionMismatch {
            expected: dimensionality,
            found: x.len(),
        });
    }
    if let Some(d) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { dimension: d });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StreamEngine {
    config: EngineConfig,
    params: ScoreParams,
    model: Forest,
    window: Window,
    rebuild_epoch: u64,
    /// Accepted points, bootstrap included.
    points_seen: u64,
    /// Every arrival, accepted or not; the next point's stream ordinal.
    next_ordinal: u64,
    rejected: u64,
}

impl StreamEngine {
    /// Builds the initial model from exactly `config.window_size` points.
    pub fn bootstrap<P>(first_window: &[P], config: EngineConfig) -> Result<Self>
    where
        P: AsRef<[f64]> + Sync,
    {
        Self::bootstrap_at(first_window, config, None)
    }

    fn bootstrap_at<P>(
        first_window: &[P],
        config: EngineConfig,
        ordinal: Option<u64>,
    ) -> Result<Self>
    where
        P: AsRef<[f64]> + Sync,
    {
        config.validate()?;
        if first_window.len() != config.window_size {
            return Err(Error::invalid(format!(
                "bootstrap block must hold exactly {} points, got {}",
                config.window_size,
                first_window.len()
            )));
        }
        let model = Forest::build(first_window, &config.forest_config(0))?;
        let w = config.window_size as u64;
        Ok(Self {
            params: config.score_params(),
            window: Window::new(config.window_size),
            model,
            rebuild_epoch: 0,
            points_seen: w,
            next_ordinal: ordinal.unwrap_or(w),
            rejected: 0,
            config,
        })
    }

    /// Scores `x` with the current model, then adds it to the window and
    /// rebuilds if the window is full.
    ///
    /// A malformed point is rejected and counted; it consumes a stream
    /// ordinal but never enters the window.
    pub fn process_point(&mut self, x: &[f64]) -> Result<ScoreRecord> {
        let arrival = Instant::now();
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        if let Err(e) = check_point(x, self.model.dimensionality()) {
            self.rejected += 1;
            return Err(e);
        }
        let score = anomaly_score(x, &self.model, &self.params)?;
        let latency = arrival.elapsed();

        self.points_seen += 1;
        self.window.push(x.to_vec());
        let rebuild_time = if self.window.is_full() {
            let started = Instant::now();
            self.rebuild()?;
            Some(started.elapsed())
        } else {
            None
        };

        Ok(ScoreRecord {
            point_index: ordinal,
            score,
            is_anomaly: classify(score, &self.params),
            latency,
            rebuild_time,
        })
    }

    fn rebuild(&mut self) -> Result<()> {
        let epoch = self.rebuild_epoch + 1;
        self.model = Forest::build(self.window.points(), &self.config.forest_config(epoch))?;
        self.window.clear();
        self.rebuild_epoch = epoch;
        Ok(())
    }

    /// Scores `x` against the current model without touching any state.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.model.dimensionality())?;
        anomaly_score(x, &self.model, &self.params)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn model(&self) -> &Forest {
        &self.model
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn rebuild_epoch(&self) -> u64 {
        self.rebuild_epoch
    }

    pub fn points_seen(&self) -> u64 {
        self.points_seen
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedPoint {
    pub ordinal: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    /// In arrival order.
    pub records: Vec<ScoreRecord>,
    pub rejected: Vec<RejectedPoint>,
    pub rebuilds: u64,
    pub bootstrap_time: Duration,
}

/// Runs the detector over a whole point source.
///
/// The first `w` well-formed points bootstrap the model; malformed points
/// anywhere in the source are skipped and reported.
pub fn run_stream<I, P>(source: I, config: &EngineConfig) -> Result<StreamOutput>
where
    I: IntoIterator<Item = P>,
    P: AsRef<[f64]>,
{
    config.validate()?;
    let w = config.window_size;
    let mut source = source.into_iter();
    let mut rejected = Vec::new();
    let mut bootstrap: Vec<Vec<f64>> = Vec::with_capacity(w);
    let mut bootstrap_ordinals = Vec::with_capacity(w);
    let mut dimensionality = None;
    let mut ordinal = 0u64;

    while bootstrap.len() < w {
        let Some(p) = source.next() else {
            return Err(Error::InsufficientData {
                needed: w,
                got: bootstrap.len(),
            });
        };
        let x = p.as_ref();
        let m = *dimensionality.get_or_insert(x.len());
        match check_point(x, m).and_then(|_| {
            if m == 0 {
                Err(Error::invalid("points must have at least one coordinate"))
            } else {
                Ok(())
            }
        }) {
            Ok(()) => {
                bootstrap.push(x.to_vec());
                bootstrap_ordinals.push(ordinal);
            }
            Err(e) => {
                if bootstrap.is_empty() {
                    dimensionality = None;
                }
                rejected.push(RejectedPoint {
                    ordinal,
                    reason: e.to_string(),
                });
            }
        }
        ordinal += 1;
    }

    let started = Instant::now();
    let mut engine = StreamEngine::bootstrap_at(&bootstrap, config.clone(), Some(ordinal))?;
    let bootstrap_time = started.elapsed();

    let mut records = Vec::new();
    if config.score_initial_window {
        for (x, &idx) in bootstrap.iter().zip(&bootstrap_ordinals) {
            let arrival = Instant::now();
            let score = engine.score(x)?;
            records.push(ScoreRecord {
                point_index: idx,
                score,
                is_anomaly: classify(score, &engine.params),
                latency: arrival.elapsed(),
                rebuild_time: None,
            });
        }
    }
    drop(bootstrap);

    for p in source {
        match engine.process_point(p.as_ref()) {
            Ok(record) => records.push(record),
            Err(e @ (Error::DimensionMismatch { .. } | Error::NonFinite { .. })) => {
                rejected.push(RejectedPoint {
                    ordinal: engine.next_ordinal - 1,
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e),
        }
    }

    Ok(StreamOutput {
        records,
        rejected,
        rebuilds: engine.rebuild_epoch(),
        bootstrap_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, m: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| spread * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect()
    }

    fn config(w: usize, t: usize) -> EngineConfig {
        EngineConfig {
            window_size: w,
            num_trees: t,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn bootstrap_builds_model_and_empty_window() {
        let data = gaussian(128, 6, 1.0, 1);
        let engine = StreamEngine::bootstrap(&data, config(128, 60)).unwrap();
        assert_eq!(engine.model().num_trees(), 60);
        assert!(engine.window().is_empty());
        assert_eq!(engine.rebuild_epoch(), 0);
        assert_eq!(engine.points_seen(), 128);
    }

    #[test]
    fn bootstrap_on_identical_pair() {
        let data = vec![vec![1.0, 2.0]; 2];
        let engine = StreamEngine::bootstrap(&data, config(2, 1)).unwrap();
        assert!(engine.model().trees()[0].root().unwrap().is_leaf());
    }

    #[test]
    fn bootstrap_rejects_wrong_block_length() {
        let data = gaussian(10, 2, 1.0, 1);
        assert!(StreamEngine::bootstrap(&data, config(11, 3)).is_err());
        assert!(StreamEngine::bootstrap(&data[..1], config(1, 3)).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let data = gaussian(64, 3, 1.0, 4);
        let a = StreamEngine::bootstrap(&data, config(64, 10)).unwrap();
        let b = StreamEngine::bootstrap(&data, config(64, 10)).unwrap();
        assert_eq!(a.model(), b.model());
        assert_eq!(a.window(), b.window());
    }

    #[test]
    fn wth_point_is_scored_by_old_model_then_rebuild_fires() {
        let data = gaussian(16, 2, 1.0, 2);
        let mut engine = StreamEngine::bootstrap(&data[..8], config(8, 5)).unwrap();
        for (i, x) in data[8..15].iter().enumerate() {
            let r = engine.process_point(x).unwrap();
            assert_eq!(r.point_index, 8 + i as u64);
            assert!(r.rebuild_time.is_none());
        }
        let old_model = engine.model().clone();
        let expected = anomaly_score(&data[15], &old_model, &engine.params).unwrap();
        let r = engine.process_point(&data[15]).unwrap();
        assert_eq!(r.score, expected);
        assert!(r.rebuild_time.is_some());
        assert_eq!(engine.rebuild_epoch(), 1);
        assert!(engine.window().is_empty());
        assert_ne!(engine.model(), &old_model);
        let rebuilt = Forest::build(&data[8..16], &engine.config().forest_config(1)).unwrap();
        assert_eq!(engine.model(), &rebuilt);
    }

    #[test]
    fn rebuild_count_follows_blocks() {
        let w = 32;
        let data = gaussian(w + 3 * w, 3, 1.0, 3);
        let mut engine = StreamEngine::bootstrap(&data[..w], config(w, 4)).unwrap();
        for x in &data[w..] {
            engine.process_point(x).unwrap();
            let expected = (engine.points_seen() - w as u64) / w as u64;
            assert_eq!(engine.rebuild_epoch(), expected);
        }
        assert_eq!(engine.rebuild_epoch(), 3);
    }

    #[test]
    fn malformed_points_are_counted_and_skipped() {
        let data = gaussian(10, 2, 1.0, 5);
        let mut engine = StreamEngine::bootstrap(&data[..4], config(4, 3)).unwrap();
        assert!(engine.process_point(&[1.0]).is_err());
        assert!(engine.process_point(&[1.0, f64::NAN]).is_err());
        assert_eq!(engine.rejected(), 2);
        assert!(engine.window().is_empty());
        let r = engine.process_point(&data[4]).unwrap();
        assert_eq!(r.point_index, 6);
        assert_eq!(engine.window().len(), 1);
    }

    #[test]
    fn run_stream_counts() {
        let w = 16;
        let data = gaussian(2 * w, 2, 1.0, 6);
        let out = run_stream(&data[..w], &config(w, 4)).unwrap();
        assert!(out.records.is_empty());
        let out = run_stream(&data, &config(w, 4)).unwrap();
        assert_eq!(out.records.len(), w);
        assert_eq!(out.rebuilds, 1);
        let indices: Vec<u64> = out.records.iter().map(|r| r.point_index).collect();
        assert_eq!(indices, (w as u64..2 * w as u64).collect::<Vec<_>>());
        let short = run_stream(&data[..w - 1], &config(w, 4));
        assert!(matches!(
            short,
            Err(Error::InsufficientData {
                needed: 16,
                got: 15
            })
        ));
    }

    #[test]
    fn run_stream_scores_initial_window_on_request() {
        let w = 16;
        let data = gaussian(3 * w, 2, 1.0, 7);
        let cfg = EngineConfig {
            score_initial_window: true,
            ..config(w, 4)
        };
        let out = run_stream(&data, &cfg).unwrap();
        assert_eq!(out.records.len(), 3 * w);
        assert!(out
            .records
            .iter()
            .enumerate()
            .all(|(i, r)| r.point_index == i as u64));
        let engine = StreamEngine::bootstrap(&data[..w], cfg.clone()).unwrap();
        assert_eq!(out.records[0].score, engine.score(&data[0]).unwrap());
    }

    #[test]
    fn run_stream_skips_bad_points_with_ordinals() {
        let w = 8;
        let mut data = gaussian(3 * w, 2, 1.0, 8);
        data[2] = vec![f64::INFINITY, 0.0];
        data[12] = vec![0.0];
        let out = run_stream(&data, &config(w, 3)).unwrap();
        let bad: Vec<u64> = out.rejected.iter().map(|r| r.ordinal).collect();
        assert_eq!(bad, vec![2, 12]);
        assert_eq!(out.records.len(), 3 * w - w - 2);
        assert!(out.records.iter().all(|r| r.point_index != 12));
        assert_eq!(out.records[0].point_index, w as u64 + 1);
    }

    #[test]
    fn stream_order_matters() {
        let w = 32;
        let data = gaussian(4 * w, 3, 1.0, 9);
        let mut shuffled = data.clone();
        shuffled.reverse();
        let a = run_stream(&data, &config(w, 8)).unwrap();
        let b = run_stream(&shuffled, &config(w, 8)).unwrap();
        let sa: Vec<f64> = a.records.iter().map(|r| r.score).collect();
        let sb: Vec<f64> = b.records.iter().map(|r| r.score).collect();
        assert_ne!(sa, sb);
    }

    #[test]
    fn scores_depend_only_on_earlier_blocks() {
        // Altering the stream from ordinal 4w on must leave every earlier
        // score untouched.
        let w = 16;
        let data = gaussian(6 * w, 2, 1.0, 10);
        let mut altered = data.clone();
        for x in &mut altered[4 * w..] {
            x[0] += 100.0;
        }
        let a = run_stream(&data, &config(w, 5)).unwrap();
        let b = run_stream(&altered, &config(w, 5)).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            if ra.point_index < 4 * w as u64 {
                assert_eq!(ra.score, rb.score, "ordinal {}", ra.point_index);
            }
        }
    }

    #[test]
    fn dense_cluster_versus_far_point() {
        let mut separated = 0;
        for seed in 0..100u64 {
            // Spread well below the bin width.
            let data = gaussian(128, 6, 0.1, seed);
            let cfg = EngineConfig {
                seed,
                num_trees: 30,
                ..config(128, 30)
            };
            let engine = StreamEngine::bootstrap(&data, cfg).unwrap();
            let inlier = engine.score(&data[0]).unwrap();
            let far = engine.score(&[50.0; 6]).unwrap();
            if inlier < 0.65 && far > 0.65 {
                separated += 1;
            }
        }
        assert!(separated >= 95, "separated in {separated}/100 runs");
    }

    #[test]
    fn invalid_config() {
        let data = gaussian(10, 2, 1.0, 1);
        let bad = EngineConfig {
            threshold: 1.5,
            ..config(10, 2)
        };
        assert!(StreamEngine::bootstrap(&data, bad).is_err());
        assert!(run_stream(&data, &config(10, 0)).is_err());
    }
}
