//! Reference implementations used as test oracles. They are written from
//! the algorithm descriptions, independently of the library internals.

#![allow(dead_code)]

use dlshiforest::{height_limit, LshiTree, TreeNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GAMMA: f64 = 0.5772156649;

pub fn gaussian_window(n: usize, m: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..m)
                .map(|_| spread * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn oracle_mu(psi: usize, v: usize) -> f64 {
    if psi <= 1 {
        return 0.0;
    }
    if psi <= v {
        return 1.0;
    }
    let v = v as f64;
    ((psi as f64).ln() + (v - 1.0).ln() + GAMMA) / v.ln() - 0.5
}

fn oracle_hash(tree: &LshiTree, index: usize, x: &[f64]) -> i64 {
    let f = tree.family().function(index);
    let mut dot = 0.0;
    for (a, v) in f.projection().iter().zip(x) {
        dot += a * v;
    }
    ((dot + f.offset()) / f.width()).floor() as i64
}

fn descend(x: &[f64], tree: &LshiTree, node: &TreeNode, d: usize, g: f64, v: usize) -> f64 {
    if node.is_leaf() {
        if d == 0 {
            return oracle_mu(node.size(), v);
        }
        let e = node.hash_index() as f64 / d as f64;
        return d as f64 * e.powf(g) + oracle_mu(node.size(), v);
    }
    let key = oracle_hash(tree, node.hash_index(), x);
    for (k, child) in node.children() {
        if k.0 == key {
            return descend(x, tree, child, d + 1, g, v);
        }
    }
    let e = (node.hash_index() + 1) as f64 / (d + 1) as f64;
    (d + 1) as f64 * e.powf(g)
}

/// Naive recursive traversal with a linear child scan.
pub fn naive_path_length(x: &[f64], tree: &LshiTree, g: f64, v: usize) -> f64 {
    match tree.root() {
        Some(root) => descend(x, tree, root, 0, g, v),
        None => -1.0,
    }
}

/// All-pairs AUC with half credit for ties.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Checks size conservation, compression and the height bound; returns
/// the first violation.
pub fn check_tree(tree: &LshiTree) -> Result<(), String> {
    let h = height_limit(tree.sample_size()).map_err(|e| e.to_string())?;
    if h != tree.height_limit() {
        return Err(format!("height limit {} != {h}", tree.height_limit()));
    }
    let root = tree.root().ok_or("missing root")?;
    if root.size() != tree.sample_size() {
        return Err(format!(
            "root size {} != sample {}",
            root.size(),
            tree.sample_size()
        ));
    }
    check_node(root, h)
}

fn check_node(node: &TreeNode, h: usize) -> Result<(), String> {
    if node.is_leaf() {
        return if node.size() >= 1 {
            Ok(())
        } else {
            Err("empty leaf".into())
        };
    }
    if node.hash_index() > h {
        return Err(format!(
            "internal hash index {} above H = {h}",
            node.hash_index()
        ));
    }
    if node.children().len() < 2 {
        return Err(format!(
            "internal node with {} child",
            node.children().len()
        ));
    }
    let total: usize = node.children().iter().map(|(_, c)| c.size()).sum();
    if total != node.size() {
        return Err(format!("children hold {total} of {} points", node.size()));
    }
    for (_, child) in node.children() {
        if child.hash_index() <= node.hash_index() {
            return Err("hash index does not increase along a path".into());
        }
        check_node(child, h)?;
    }
    Ok(())
}

/// A window with duplicates and scale variety to exercise compression.
pub fn mixed_window(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let spread = [0.05, 0.3, 1.0, 4.0][rng.random_range(0..4)];
    let mut window = gaussian_window(n, m, spread, rng);
    for i in 0..n / 10 {
        let j = rng.random_range(0..n);
        window[i] = window[j].clone();
    }
    window
}
