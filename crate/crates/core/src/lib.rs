//! Streaming anomaly detection with ensembles of LSH isolation trees.
//!
//! A [`StreamEngine`] keeps a [`Forest`] built over a fixed-size window,
//! scores each arriving point against it and rebuilds the forest from the
//! window whenever the window fills.

pub mod engine;
pub mod error;
pub mod forest;
pub mod harness;
pub mod lsh;
pub mod metrics;
pub mod scoring;
pub mod seeding;

pub use engine::{run_stream, EngineConfig, RejectedPoint, StreamEngine, StreamOutput, Window};
pub use error::{Error, Result};
pub use forest::{
    build_forest, build_tree, height_limit, sample_window, sampling_rate, Forest, ForestConfig,
    LshiTree, TreeNode,
};
pub use lsh::{hash_point, lsh_split, make_family, HashFamily, HashKey, L2HashFunction};
pub use metrics::{aggregate_runs, auc, f1, AggregateReport, LabeledScore, MetricsReport};
pub use scoring::{anomaly_score, classify, mu, path_length, Normalizer, ScoreParams, ScoreRecord};
