//! Path lengths and ensemble anomaly scores.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::forest::{Forest, LshiTree, TreeNode};

pub const EULER_GAMMA: f64 = 0.5772156649;
pub const DEFAULT_THRESHOLD: f64 = 0.65;

/// Which sample size normalizes a tree's path length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalizer {
    /// The tree's own sample size.
    #[default]
    PerTree,
    /// The size of the window the forest was built from, for every tree.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    pub branching_factor: usize,
    pub granularity: f64,
    pub threshold: f64,
    pub normalizer: Normalizer,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            branching_factor: 2,
            granularity: 1.0,
            threshold: DEFAULT_THRESHOLD,
            normalizer: Normalizer::PerTree,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if self.branching_factor < 2 {
            return Err(Error::invalid(format!(
                "branching factor must be at least 2, got {}",
                self.branching_factor
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !self.granularity.is_finite() {
            return Err(Error::invalid("granularity must be finite"));
        }
        Ok(())
    }
}

/// Outcome of scoring one stream point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub point_index: u64,
    pub score: f64,
    pub is_anomaly: bool,
    /// Arrival to score availability.
    pub latency: Duration,
    /// Set on the record whose arrival filled the window.
    pub rebuild_time: Option<Duration>,
}

/// Expected path-length normalizer for a tree over `psi` points with
/// branching factor `v`.
pub fn mu(psi: usize, v: usize) -> Result<f64> {
    if v < 2 {
        return Err(Error::invalid(format!(
            "branching factor must be at least 2, got {v}"
        )));
    }
    Ok(mu_unchecked(psi, v))
}

#[inline]
fn mu_unchecked(psi: usize, v: usize) -> f64 {
    if psi <= 1 {
        0.0
    } else if psi <= v {
        1.0
    } else {
        let v = v as f64;
        ((psi as f64).ln() + (v - 1.0).ln() + EULER_GAMMA) / v.ln() - 0.5
    }
}

/// Path length of `x` in `tree`, or -1 when the tree is empty.
pub fn path_length(x: &[f64], tree: &LshiTree, params: &ScoreParams) -> Result<f64> {
    let m = tree.family().dimensionality();
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: x.len(),
        });
    }
    Ok(path_length_unchecked(x, tree, params))
}

fn path_length_unchecked(x: &[f64], tree: &LshiTree, params: &ScoreParams) -> f64 {
    let Some(mut node) = tree.root() else {
        return -1.0;
    };
    let g = params.granularity;
    let v = params.branching_factor;
    let mut depth = 0usize;
    loop {
        if node.is_leaf() {
            return leaf_length(node, depth, g, v);
        }
        let key = tree.family().hash_unchecked(node.hash_index(), x);
        match node.child(key) {
            Some(child) => {
                node = child;
                depth += 1;
            }
            None => {
                // x leaves the trie here; count the failed split as one more hop.
                let d = (depth + 1) as f64;
                let e = (node.hash_index() + 1) as f64 / d;
                return d * e.powf(g);
            }
        }
    }
}

#[inline]
fn leaf_length(node: &TreeNode, depth: usize, g: f64, v: usize) -> f64 {
    if depth == 0 {
        // Root leaf: nothing was split, only the unresolved mass counts.
        return mu_unchecked(node.size(), v);
    }
    let d = depth as f64;
    let e = node.hash_index() as f64 / d;
    d * e.powf(g) + mu_unchecked(node.size(), v)
}

/// Mean over trees of `2^(-h/mu)`.
///
/// Trees built from at most one point have no meaningful normalizer and
/// are left out of the mean.
pub fn anomaly_score(x: &[f64], forest: &Forest, params: &ScoreParams) -> Result<f64> {
    if x.len() != forest.dimensionality() {
        return Err(Error::DimensionMismatch {
            expected: forest.dimensionality(),
            found: x.len(),
        });
    }
    let v = params.branching_factor;
    let mut total = 0.0;
    let mut counted = 0usize;
    for tree in forest.trees() {
        if tree.sample_size() <= 1 || tree.root().is_none() {
            continue;
        }
        let psi = match params.normalizer {
            Normalizer::PerTree => tree.sample_size(),
            Normalizer::Window => forest.window_len(),
        };
        let norm = mu_unchecked(psi, v);
        if norm <= 0.0 {
            continue;
        }
        let h = path_length_unchecked(x, tree, params);
        total += (-h / norm).exp2();
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::NoValidTrees);
    }
    Ok(total / counted as f64)
}

pub fn classify(score: f64, params: &ScoreParams) -> bool {
    score > params.threshold
}
