//! Detection quality and time-cost metrics.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::time::Duration;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledScore {
    pub score: f64,
    /// `true` marks an anomaly.
    pub label: bool,
}

impl LabeledScore {
    pub fn new(score: f64, label: bool) -> Self {
        Self { score, label }
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic
/// `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn auc(records: &[LabeledScore]) -> Result<f64> {
    let positives = records.iter().filter(|r| r.label).count();
    let negatives = records.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both positive and negative labels",
        ));
    }
    if records.iter().any(|r| !r.score.is_finite()) {
        return Err(Error::UndefinedMetric("AUC needs finite scores"));
    }

    let mut sorted: Vec<&LabeledScore> = records.iter().collect();
    sorted.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal));

    // Walk tie groups in ascending order; each positive beats every negative
    // strictly below its group and splits credit with negatives inside it.
    let mut wins = 0.0f64;
    let mut negatives_below = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0usize, 0usize);
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            if sorted[j].label {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        wins += pos as f64 * (negatives_below as f64 + 0.5 * neg as f64);
        negatives_below += neg;
        i = j;
    }
    Ok(wins / (positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Nothing was flagged, so precision is 0 by convention.
    pub precision_degenerate: bool,
    /// No labeled anomalies, so recall is 0 by convention.
    pub recall_degenerate: bool,
}

/// Precision, recall and F1 when flagging `score > threshold`.
pub fn f1(records: &[LabeledScore], threshold: f64) -> F1Score {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for r in records {
        match (r.score > threshold, r.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    F1Score {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision_degenerate: tp + fp == 0,
        recall_degenerate: tp + fn_ == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencySummary {
    pub mean: Duration,
    pub p99: Duration,
}

/// Mean and nearest-rank 99th percentile.
pub fn latency_summary(latencies: &[Duration]) -> LatencySummary {
    if latencies.is_empty() {
        return LatencySummary::default();
    }
    let total: u128 = latencies.iter().map(Duration::as_nanos).sum();
    let mean = Duration::from_nanos((total / latencies.len() as u128) as u64);
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable();
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    LatencySummary {
        mean,
        p99: sorted[rank - 1],
    }
}

/// Quality and time cost of one detection run.
///
/// `auc` is `None` when the scored points do not contain both classes (or
/// carry no labels at all); F1 fields are then computed but meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
    pub mean_latency: Duration,
    pub p99_latency: Duration,
    pub n_points: usize,
    /// Labeled anomalies among the scored points.
    pub n_anomalies: usize,
    /// Points scored above the threshold.
    pub n_flagged: usize,
}

impl MetricsReport {
    pub fn compute(records: &[LabeledScore], latencies: &[Duration], threshold: f64) -> Self {
        let quality = f1(records, threshold);
        let lat = latency_summary(latencies);
        Self {
            auc: auc(records).ok(),
            f1: quality.f1,
            precision: quality.precision,
            recall: quality.recall,
            threshold,
            mean_latency: lat.mean,
            p99_latency: lat.p99,
            n_points: records.len(),
            n_anomalies: records.iter().filter(|r| r.label).count(),
            n_flagged: records.iter().filter(|r| r.score > threshold).count(),
        }
    }

    /// Flat `key=value` document, one field per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let auc = self
            .auc
            .map_or_else(|| "NA".to_string(), |a| format!("{a:.12}"));
        let _ = writeln!(out, "auc={auc}");
        let _ = writeln!(out, "f1={:.12}", self.f1);
        let _ = writeln!(out, "precision={:.12}", self.precision);
        let _ = writeln!(out, "recall={:.12}", self.recall);
        let _ = writeln!(out, "threshold={}", self.threshold);
        let _ = writeln!(out, "mean_latency_ns={}", self.mean_latency.as_nanos());
        let _ = writeln!(out, "p99_latency_ns={}", self.p99_latency.as_nanos());
        let _ = writeln!(out, "n_points={}", self.n_points);
        let _ = writeln!(out, "n_anomalies={}", self.n_anomalies);
        let _ = writeln!(out, "n_flagged={}", self.n_flagged);
        out
    }
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
    /// Runs that contributed (AUC can be undefined for some runs).
    pub count: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        };
        Self { mean, std, count }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub runs: usize,
    pub auc: Spread,
    pub f1: Spread,
    pub precision: Spread,
    pub recall: Spread,
    /// In nanoseconds.
    pub mean_latency_ns: Spread,
    pub p99_latency_ns: Spread,
    pub n_points: Spread,
    pub n_anomalies: Spread,
}

impl AggregateReport {
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "runs={}", self.runs);
        for (name, s) in [
            ("auc", &self.auc),
            ("f1", &self.f1),
            ("precision", &self.precision),
            ("recall", &self.recall),
            ("mean_latency_ns", &self.mean_latency_ns),
            ("p99_latency_ns", &self.p99_latency_ns),
            ("n_points", &self.n_points),
            ("n_anomalies", &self.n_anomalies),
        ] {
            let _ = writeln!(out, "{name}_mean={:.12}", s.mean);
            let _ = writeln!(out, "{name}_std={:.12}", s.std);
        }
        let _ = writeln!(out, "auc_runs={}", self.auc.count);
        out
    }
}

/// Per-field mean and dispersion over repeated runs.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::invalid("cannot aggregate zero reports"));
    }
    let field = |f: &dyn Fn(&MetricsReport) -> f64| -> Spread {
        Spread::of(&reports.iter().map(f).collect::<Vec<_>>())
    };
    let aucs: Vec<f64> = reports.iter().filter_map(|r| r.auc).collect();
    Ok(AggregateReport {
        runs: reports.len(),
        auc: Spread::of(&aucs),
        f1: field(&|r| r.f1),
        precision: field(&|r| r.precision),
        recall: field(&|r| r.recall),
        mean_latency_ns: field(&|r| r.mean_latency.as_nanos() as f64),
        p99_latency_ns: field(&|r| r.p99_latency.as_nanos() as f64),
        n_points: field(&|r| r.n_points as f64),
        n_anomalies: field(&|r| r.n_anomalies as f64),
    })
}
