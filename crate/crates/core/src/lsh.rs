//! p-stable (l2) locality-sensitive hashing.
//!
//! A function projects a point onto a Gaussian direction, shifts it by a
//! random offset and buckets the result into bins of fixed width:
//!
//! ```text
//! h(x) = floor((a . x + b) / width),  a ~ N(0, I),  b ~ U[0, width)
//! ```
//!
//! Points that are close in Euclidean distance land in the same bin with
//! higher probability than distant ones. Every coordinate takes part in the
//! dot product, so correlations between input streams shape the partition.

use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Bin width used when none is configured. Inputs are expected to be
/// robust-scaled, which puts the typical coordinate spread near 1.
pub const DEFAULT_BIN_WIDTH: f64 = 1.0;

/// Bucket identifier produced by an [`L2HashFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HashKey(pub i64);

#[derive(Debug, Clone, PartialEq)]
pub struct L2HashFunction {
    projection: Vec<f64>,
    offset: f64,
    width: f64,
}

impl L2HashFunction {
    pub fn new(projection: Vec<f64>, offset: f64, width: f64) -> Result<Self> {
        if projection.is_empty() {
            return Err(Error::invalid(
                "projection must have at least one coordinate",
            ));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid(format!(
                "bin width must be positive, got {width}"
            )));
        }
        if !(0.0..width).contains(&offset) {
            return Err(Error::invalid(format!(
                "offset {offset} outside [0, {width})"
            )));
        }
        Ok(Self {
            projection,
            offset,
            width,
        })
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn dimensionality(&self) -> usize {
        self.projection.len()
    }

    /// Hashes `x`, checking its dimensionality first.
    pub fn hash(&self, x: &[f64]) -> Result<HashKey> {
        if x.len() != self.projection.len() {
            return Err(Error::DimensionMismatch {
                expected: self.projection.len(),
                found: x.len(),
            });
        }
        Ok(self.hash_unchecked(x))
    }

    #[inline]
    pub(crate) fn hash_unchecked(&self, x: &[f64]) -> HashKey {
        debug_assert_eq!(x.len(), self.projection.len());
        let dot: f64 = self.projection.iter().zip(x).map(|(a, v)| a * v).sum();
        // `as` saturates; finite inputs never get near the i64 range at sane scales.
        HashKey(((dot + self.offset) / self.width).floor() as i64)
    }
}

/// An unbounded, indexable sequence of independent l2 hash functions.
///
/// Function `I` is a pure function of `(seed, I, dimensionality, width)`.
/// A prefix of the sequence can be cached with [`HashFamily::materialize`];
/// anything beyond the cache is derived on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily {
    seed: u64,
    dimensionality: usize,
    width: f64,
    functions: Vec<L2HashFunction>,
}

impl HashFamily {
    pub fn new(dimensionality: usize, seed: u64, width: f64) -> Result<Self> {
        if dimensionality == 0 {
            return Err(Error::invalid("dimensionality must be at least 1"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid(format!(
                "bin width must be positive, got {width}"
            )));
        }
        Ok(Self {
            seed,
            dimensionality,
            width,
            functions: Vec::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimensionality(&self) -> usize {
        self.dimensionality
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Number of cached functions.
    pub fn materialized(&self) -> usize {
        self.functions.len()
    }

    /// Draws function `index` from its own ChaCha stream, ignoring the cache.
    pub fn derive(&self, index: usize) -> L2HashFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let projection: Vec<f64> = (0..self.dimensionality)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut offset = rng.random::<f64>() * self.width;
        if offset >= self.width {
            offset = 0.0;
        }
        L2HashFunction {
            projection,
            offset,
            width: self.width,
        }
    }

    /// Caches functions `0..count`.
    pub fn materialize(&mut self, count: usize) {
        while self.functions.len() < count {
            let f = self.derive(self.functions.len());
            self.functions.push(f);
        }
    }

    pub fn function(&self, index: usize) -> Cow<'_, L2HashFunction> {
        match self.functions.get(index) {
            Some(f) => Cow::Borrowed(f),
            None => Cow::Owned(self.derive(index)),
        }
    }

    #[inline]
    pub(crate) fn hash_unchecked(&self, index: usize, x: &[f64]) -> HashKey {
        match self.functions.get(index) {
            Some(f) => f.hash_unchecked(x),
            None => self.derive(index).hash_unchecked(x),
        }
    }
}

/// Creates a family with the default bin width.
pub fn make_family(dimensionality: usize, seed: u64) -> Result<HashFamily> {
    HashFamily::new(dimensionality, seed, DEFAULT_BIN_WIDTH)
}

pub fn hash_point(f: &L2HashFunction, x: &[f64]) -> Result<HashKey> {
    f.hash(x)
}

/// Partitions `points` into buckets by their key under `f`.
///
/// Buckets are ordered by key and keep the input order inside each bucket.
pub fn lsh_split<'a>(
    points: &[&'a [f64]],
    f: &L2HashFunction,
) -> Result<BTreeMap<HashKey, Vec<&'a [f64]>>> {
    let mut buckets: BTreeMap<HashKey, Vec<&'a [f64]>> = BTreeMap::new();
    for &p in points {
        buckets.entry(f.hash(p)?).or_default().push(p);
    }
    Ok(buckets)
}
