//! Data ingestion, scaling, synthetic streams and experiment sweeps.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod scaler;
pub mod synth;

pub use config::KvDocument;
pub use dataset::{load_csv, select_subset, subset_start, Dataset};
pub use experiment::{
    format_significant, prepare, run_detection, run_experiment, write_scores_csv, DetectSettings,
    Detection, DetectionOptions, ExperimentSpec, ScalingMode, SweepSummary,
};
pub use scaler::{robust_scale, ScalerParams};
pub use synth::{synth_stream, Cluster, Covariance, Drift, SynthSpec};
