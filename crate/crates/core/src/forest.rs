//! LSH isolation trees and the forest built from them.
//!
//! A tree is a compressed multi-branch trie. Each internal node splits its
//! points by one hash function of the tree's family; when a function fails to
//! separate anything, the next index is tried in place instead of emitting a
//! single-child node. `hash_index` therefore records the uncompressed depth
//! while the node's position in the trie is the compressed depth.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lsh::{HashFamily, HashKey, DEFAULT_BIN_WIDTH};
use crate::seeding::{derive_seed, rng_from};

const SAMPLER_STREAM: u64 = 0;
const FAMILY_STREAM: u64 = 1;

/// Bounds of the sampling exponent `s`; a tree sees about `2^s` points.
pub const SAMPLE_EXPONENT_MIN: f64 = 6.0;
pub const SAMPLE_EXPONENT_MAX: f64 = 10.0;

/// Upper bound on the average height of a random digital trie over `sample_size`
/// keys with a uniform binary alphabet, floored to an integer.
pub fn height_limit(sample_size: usize) -> Result<usize> {
    if sample_size == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    Ok((2.0 * (sample_size as f64).log2() + 0.8327).floor() as usize)
}

/// Fraction of a window of `n` points drawn for exponent `s`.
pub fn sampling_rate(n: usize, s: f64) -> f64 {
    (2f64.powf(s) / n as f64).min(1.0)
}

/// Draws `s ~ U[6, 10]` and subsamples the window at rate `min(1, 2^s / n)`.
pub fn sample_window<'a, P, R>(window: &'a [P], rng: &mut R) -> Result<Vec<&'a [f64]>>
where
    P: AsRef<[f64]>,
    R: Rng + ?Sized,
{
    if window.is_empty() {
        return Err(Error::invalid("cannot sample an empty window"));
    }
    let s = rng.random_range(SAMPLE_EXPONENT_MIN..=SAMPLE_EXPONENT_MAX);
    Ok(sample_with_exponent(window, s, rng))
}

/// Subsamples `floor(rate * n)` points (at least one) without replacement,
/// keeping window order.
pub fn sample_with_exponent<'a, P, R>(window: &'a [P], s: f64, rng: &mut R) -> Vec<&'a [f64]>
where
    P: AsRef<[f64]>,
    R: Rng + ?Sized,
{
    let n = window.len();
    if n == 0 {
        return Vec::new();
    }
    let k = ((sampling_rate(n, s) * n as f64).floor() as usize).clamp(1, n);
    if k == n {
        return window.iter().map(AsRef::as_ref).collect();
    }
    let mut picked = rand::seq::index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| window[i].as_ref()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreeNode {
    size: usize,
    hash_index: usize,
    /// Sorted by key.
    children: Vec<(HashKey, TreeNode)>,
}

impl TreeNode {
    pub fn leaf(size: usize, hash_index: usize) -> Self {
        Self {
            size,
            hash_index,
            children: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn hash_index(&self) -> usize {
        self.hash_index
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn children(&self) -> &[(HashKey, TreeNode)] {
        &self.children
    }

    pub fn child(&self, key: HashKey) -> Option<&TreeNode> {
        self.children
            .binary_search_by_key(&key, |(k, _)| *k)
            .ok()
            .map(|i| &self.children[i].1)
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|(_, c)| c.node_count())
            .sum::<usize>()
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(|(_, c)| c.leaf_count()).sum()
        }
    }

    /// Compressed depth of the deepest leaf.
    pub fn depth(&self) -> usize {
        self.children
            .iter()
            .map(|(_, c)| 1 + c.depth())
            .max()
            .unwrap_or(0)
    }
}

fn split_at(points: &[&[f64]], family: &HashFamily, index: usize) -> Vec<(HashKey, Vec<usize>)> {
    let mut buckets: BTreeMap<HashKey, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets
            .entry(family.hash_unchecked(index, p))
            .or_default()
            .push(i);
    }
    buckets.into_iter().collect()
}

/// Recursively partitions `sample`, starting with hash function `index`.
///
/// Returns `None` for an empty sample. A node becomes a leaf when it holds a
/// single point or when no function up to `height_limit` splits it.
/// Internal nodes keep the index of the function that actually split them.
///
/// The caller guarantees every point has the family's dimensionality.
pub fn build_tree(
    sample: &[&[f64]],
    height_limit: usize,
    index: usize,
    family: &HashFamily,
) -> Option<TreeNode> {
    let size = sample.len();
    if size == 0 {
        return None;
    }
    debug_assert!(sample.iter().all(|p| p.len() == family.dimensionality()));
    if size == 1 || index > height_limit {
        return Some(TreeNode::leaf(size, index));
    }

    let mut index = index;
    let mut buckets = split_at(sample, family, index);
    while buckets.len() == 1 {
        index += 1;
        if index > height_limit {
            return Some(TreeNode::leaf(size, index));
        }
        buckets = split_at(sample, family, index);
    }

    let mut subset = Vec::with_capacity(size);
    let children = buckets
        .into_iter()
        .map(|(key, members)| {
            subset.clear();
            subset.extend(members.iter().map(|&i| sample[i]));
            let child = build_tree(&subset, height_limit, index + 1, family)
                .expect("buckets are never empty");
            (key, child)
        })
        .collect();

    Some(TreeNode {
        size,
        hash_index: index,
        children,
    })
}

/// One LSH isolation tree together with the hash family it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct LshiTree {
    root: Option<TreeNode>,
    family: HashFamily,
    height_limit: usize,
    sample_size: usize,
}

impl LshiTree {
    /// Builds a tree over `sample` from hash function 0, with the height
    /// limit derived from the sample size.
    pub fn build(sample: &[&[f64]], mut family: HashFamily) -> Result<Self> {
        if let Some(p) = sample.iter().find(|p| p.len() != family.dimensionality()) {
            return Err(Error::DimensionMismatch {
                expected: family.dimensionality(),
                found: p.len(),
            });
        }
        let sample_size = sample.len();
        let limit = height_limit(sample_size.max(1))?;
        // Splits use functions 0..=limit.
        family.materialize(limit + 1);
        let root = build_tree(sample, limit, 0, &family);
        Ok(Self {
            root,
            family,
            height_limit: limit,
            sample_size,
        })
    }

    pub fn root(&self) -> Option<&TreeNode> {
        self.root.as_ref()
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn height_limit(&self) -> usize {
        self.height_limit
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub seed: u64,
    /// When off, every tree is built from the whole window.
    pub sampling_enabled: bool,
    pub bin_width: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            num_trees: 60,
            seed: 0,
            sampling_enabled: true,
            bin_width: DEFAULT_BIN_WIDTH,
        }
    }
}

/// An ensemble of independently sampled and hashed LSH isolation trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<LshiTree>,
    build_seed: u64,
    window_len: usize,
    dimensionality: usize,
}

impl Forest {
    /// Builds `config.num_trees` trees over `window`.
    ///
    /// Tree `i` draws its sample and its hash family from seeds derived from
    /// `(config.seed, i)`, so trees can be built in parallel and the result
    /// depends only on the window contents, their order and the config.
    pub fn build<P>(window: &[P], config: &ForestConfig) -> Result<Self>
    where
        P: AsRef<[f64]> + Sync,
    {
        if config.num_trees == 0 {
            return Err(Error::invalid("number of trees must be at least 1"));
        }
        let first = window
            .first()
            .ok_or_else(|| Error::invalid("cannot build a forest from an empty window"))?;
        let dimensionality = first.as_ref().len();
        if dimensionality == 0 {
            return Err(Error::invalid("points must have at least one coordinate"));
        }
        for p in window {
            let p = p.as_ref();
            if p.len() != dimensionality {
                return Err(Error::DimensionMismatch {
                    expected: dimensionality,
                    found: p.len(),
                });
            }
            if let Some(d) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { dimension: d });
            }
        }
        // Validates the width once instead of per tree.
        HashFamily::new(dimensionality, 0, config.bin_width)?;

        let trees = (0..config.num_trees)
            .into_par_iter()
            .map(|i| {
                let tree_seed = derive_seed(config.seed, i as u64);
                let sample: Vec<&[f64]> = if config.sampling_enabled {
                    let mut rng = rng_from(tree_seed, SAMPLER_STREAM);
                    sample_window(window, &mut rng)?
                } else {
                    window.iter().map(AsRef::as_ref).collect()
                };
                let family = HashFamily::new(
                    dimensionality,
                    derive_seed(tree_seed, FAMILY_STREAM),
                    config.bin_width,
                )?;
                LshiTree::build(&sample, family)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            trees,
            build_seed: config.seed,
            window_len: window.len(),
            dimensionality,
        })
    }

    pub fn trees(&self) -> &[LshiTree] {
        &self.trees
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn build_seed(&self) -> u64 {
        self.build_seed
    }

    /// Number of points in the window the forest was built from.
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn dimensionality(&self) -> usize {
        self.dimensionality
    }
}

/// Builds a `num_trees` forest with default sampling and bin width.
pub fn build_forest<P>(window: &[P], num_trees: usize, seed: u64) -> Result<Forest>
where
    P: AsRef<[f64]> + Sync,
{
    Forest::build(
        window,
        &ForestConfig {
            num_trees,
            seed,
            ..ForestConfig::default()
        },
    )
}
