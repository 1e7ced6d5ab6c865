//! Labeled synthetic streams: Gaussian inliers, uniform-box outliers and an
//! optional mean shift part way through.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;
use crate::seeding::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Per-dimension standard deviations.
    Diagonal(Vec<f64>),
    /// Full symmetric positive-definite matrix, row-major.
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub mean: Vec<f64>,
    pub covariance: Covariance,
    /// Relative mixing weight.
    pub weight: f64,
}

/// Mean shift applied to every cluster from ordinal `at` on.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub at: usize,
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub clusters: Vec<Cluster>,
    pub outlier_rate: f64,
    /// Outliers are uniform on `[outlier_low, outlier_high]^m`.
    pub outlier_low: f64,
    pub outlier_high: f64,
    pub drift: Option<Drift>,
    pub n: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// One unit-variance cluster at the origin with outliers on `[-10, 10]^m`.
    pub fn standard(dimensionality: usize, n: usize, outlier_rate: f64, seed: u64) -> Self {
        Self {
            clusters: vec![Cluster {
                mean: vec![0.0; dimensionality],
                covariance: Covariance::Diagonal(vec![1.0; dimensionality]),
                weight: 1.0,
            }],
            outlier_rate,
            outlier_low: -10.0,
            outlier_high: 10.0,
            drift: None,
            n,
            seed,
        }
    }

    pub fn with_drift(mut self, at: usize, shift: Vec<f64>) -> Self {
        self.drift = Some(Drift { at, shift });
        self
    }

    pub fn dimensionality(&self) -> usize {
        self.clusters.first().map_or(0, |c| c.mean.len())
    }
}

/// Lower-triangular `L` with `L L^T = a`.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        if a[i].len() != n {
            return Err(Error::invalid("covariance matrix must be square"));
        }
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - dot;
                if d <= 0.0 || !d.is_finite() {
                    return Err(Error::invalid("covariance matrix is not positive definite"));
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - dot) / l[j][j];
            }
        }
    }
    Ok(l)
}

enum Sampler {
    Diagonal(Vec<f64>),
    Lower(Vec<Vec<f64>>),
}

impl Sampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, mean: &[f64], out: &mut Vec<f64>) {
        let z: Vec<f64> = (0..mean.len())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        out.clear();
        match self {
            Sampler::Diagonal(std) => {
                out.extend(mean.iter().zip(std).zip(&z).map(|((m, s), z)| m + s * z))
            }
            Sampler::Lower(l) => out.extend(
                mean.iter()
                    .enumerate()
                    .map(|(i, m)| m + l[i].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()),
            ),
        }
    }
}

/// Generates `spec.n` labeled points; label `true` marks an injected outlier.
pub fn synth_stream(spec: &SynthSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(0.0..0.5).contains(&spec.outlier_rate) {
        return Err(Error::invalid(format!(
            "outlier rate must lie in [0, 0.5), got {}",
            spec.outlier_rate
        )));
    }
    if !spec.outlier_low.is_finite()
        || !spec.outlier_high.is_finite()
        || spec.outlier_low >= spec.outlier_high
    {
        return Err(Error::invalid("outlier box must have positive extent"));
    }
    let m = spec.dimensionality();
    if m == 0 {
        return Err(Error::invalid(
            "at least one cluster with a non-empty mean is required",
        ));
    }
    let mut samplers = Vec::with_capacity(spec.clusters.len());
    for c in &spec.clusters {
        if c.mean.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: c.mean.len(),
            });
        }
        if !c.weight.is_finite() || c.weight <= 0.0 {
            return Err(Error::invalid("cluster weights must be positive"));
        }
        samplers.push(match &c.covariance {
            Covariance::Diagonal(std) if std.len() == m => Sampler::Diagonal(std.clone()),
            Covariance::Full(cov) if cov.len() == m => Sampler::Lower(cholesky(cov)?),
            _ => {
                return Err(Error::invalid(
                    "covariance does not match cluster dimensionality",
                ))
            }
        });
    }
    if let Some(d) = &spec.drift {
        if d.shift.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: d.shift.len(),
            });
        }
    }

    let total_weight: f64 = spec.clusters.iter().map(|c| c.weight).sum();
    let mut rng = rng_from(spec.seed, 0);
    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    let mut shifted_mean = vec![0.0; m];
    let mut point = Vec::with_capacity(m);
    for i in 0..spec.n {
        let outlier = rng.random::<f64>() < spec.outlier_rate;
        if outlier {
            point.clear();
            point.extend((0..m).map(|_| rng.random_range(spec.outlier_low..=spec.outlier_high)));
        } else {
            let mut pick = rng.random::<f64>() * total_weight;
            let mut k = 0;
            while k + 1 < spec.clusters.len() && pick >= spec.clusters[k].weight {
                pick -= spec.clusters[k].weight;
                k += 1;
            }
            let mean = &spec.clusters[k].mean;
            let mean = match &spec.drift {
                Some(d) if i >= d.at => {
                    for ((s, a), b) in shifted_mean.iter_mut().zip(mean).zip(&d.shift) {
                        *s = a + b;
                    }
                    &shifted_mean
                }
                _ => mean,
            };
            samplers[k].draw(&mut rng, mean, &mut point);
        }
        rows.push(point.clone());
        labels.push(outlier);
    }

    let column_names = (0..m).map(|j| format!("x{j}")).collect();
    Dataset::new(column_names, rows, Some(labels))
}
