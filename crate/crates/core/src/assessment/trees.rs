//! CART decision trees (Gini impurity) and bagged random forests.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::classifiers::MaxFeatures;
use super::metrics::ClassLabel;

#[derive(Debug, Clone)]
enum Node {
    Leaf(ClassLabel),
    Split { feature: usize, threshold: f32, left: Box<Node>, right: Box<Node> },
}

/// A single CART tree.
#[derive(Debug, Clone)]
pub struct TreeModel {
    root: Node,
    dim: usize,
}

impl TreeModel {
    pub fn fit(
        features: &Array2<f32>,
        labels: &[ClassLabel],
        max_depth: usize,
        min_leaf: usize,
    ) -> Result<Self> {
        if max_depth == 0 {
            return Err(Error::ConfigError("max_depth must be at least 1".into()));
        }
        if min_leaf == 0 {
            return Err(Error::ConfigError("min_leaf must be at least 1".into()));
        }
        let indices: Vec<usize> = (0..features.nrows()).collect();
        let root = grow(features, labels, &indices, max_depth, min_leaf, None, &mut None);
        Ok(Self { root, dim: features.ncols() })
    }

    pub fn predict(&self, features: &Array2<f32>) -> Result<Vec<ClassLabel>> {
        if features.ncols() != self.dim {
            return Err(Error::ShapeError(format!(
                "model expects width {}, got {}",
                self.dim,
                features.ncols()
            )));
        }
        Ok((0..features.nrows())
            .map(|i| classify(&self.root, features, i))
            .collect())
    }
}

/// Bootstrap-aggregated trees with per-node feature subsampling.
#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<Node>,
    dim: usize,
}

impl ForestModel {
    pub fn fit(
        features: &Array2<f32>,
        labels: &[ClassLabel],
        trees: usize,
        max_depth: usize,
        max_features: MaxFeatures,
        seed: u64,
    ) -> Result<Self> {
        if trees == 0 {
            return Err(Error::ConfigError("forest needs at least one tree".into()));
        }
        if max_depth == 0 {
            return Err(Error::ConfigError("max_depth must be at least 1".into()));
        }
        let n = features.nrows();
        let d = features.ncols();
        let subset = match max_features {
            MaxFeatures::Sqrt => (d as f64).sqrt().round() as usize,
            MaxFeatures::Log2 => (d as f64).log2().round() as usize,
        }
        .clamp(1, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grown = Vec::with_capacity(trees);
        for _ in 0..trees {
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut feature_rng = Some(&mut rng);
            grown.push(grow(
                features,
                labels,
                &indices,
                max_depth,
                1,
                Some(subset),
                &mut feature_rng,
            ));
        }
        Ok(Self { trees: grown, dim: d })
    }

    pub fn predict(&self, features: &Array2<f32>) -> Result<Vec<ClassLabel>> {
        if features.ncols() != self.dim {
            return Err(Error::ShapeError(format!(
                "model expects width {}, got {}",
                self.dim,
                features.ncols()
            )));
        }
        Ok((0..features.nrows())
            .map(|i| {
                let im_votes = self
                    .trees
                    .iter()
                    .filter(|t| classify(t, features, i) == ClassLabel::Im)
                    .count();
                // Strict majority for IM; exact ties fall back to CN.
                if 2 * im_votes > self.trees.len() {
                    ClassLabel::Im
                } else {
                    ClassLabel::Cn
                }
            })
            .collect())
    }
}

fn classify(node: &Node, features: &Array2<f32>, row: usize) -> ClassLabel {
    match node {
        Node::Leaf(label) => *label,
        Node::Split { feature, threshold, left, right } => {
            if features[[row, *feature]] <= *threshold {
                classify(left, features, row)
            } else {
                classify(right, features, row)
            }
        }
    }
}

fn majority(labels: &[ClassLabel], indices: &[usize]) -> ClassLabel {
    let im = indices.iter().filter(|&&i| labels[i] == ClassLabel::Im).count();
    // Ties fall back to CN for determinism.
    if 2 * im > indices.len() {
        ClassLabel::Im
    } else {
        ClassLabel::Cn
    }
}

fn gini(im: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = im as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

/// Recursively grows a node. `feature_subset` of `Some(m)` samples `m`
/// distinct candidate features per node (the forest case); `None` scans all.
fn grow(
    features: &Array2<f32>,
    labels: &[ClassLabel],
    indices: &[usize],
    depth_left: usize,
    min_leaf: usize,
    feature_subset: Option<usize>,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Node {
    let total = indices.len();
    let im = indices.iter().filter(|&&i| labels[i] == ClassLabel::Im).count();
    if depth_left == 0 || im == 0 || im == total || total < 2 * min_leaf {
        return Node::Leaf(majority(labels, indices));
    }

    let d = features.ncols();
    let candidates: Vec<usize> = match (feature_subset, rng.as_deref_mut()) {
        (Some(m), Some(r)) => {
            let mut all: Vec<usize> = (0..d).collect();
            all.shuffle(r);
            all.truncate(m.min(d));
            all.sort_unstable();
            all
        }
        _ => (0..d).collect(),
    };

    let parent_impurity = gini(im, total);
    let mut best: Option<(f64, usize, f32)> = None;
    let mut order: Vec<usize> = Vec::with_capacity(total);
    for &feature in &candidates {
        order.clear();
        order.extend_from_slice(indices);
        order.sort_by(|&a, &b| {
            features[[a, feature]]
                .partial_cmp(&features[[b, feature]])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut left_im = 0usize;
        for pos in 0..total - 1 {
            if labels[order[pos]] == ClassLabel::Im {
                left_im += 1;
            }
            let left_n = pos + 1;
            let right_n = total - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let lo = features[[order[pos], feature]];
            let hi = features[[order[pos + 1], feature]];
            if lo == hi {
                continue;
            }
            let weighted = (left_n as f64 * gini(left_im, left_n)
                + right_n as f64 * gini(im - left_im, right_n))
                / total as f64;
            // Zero-gain splits are still taken (the node is impure, and a
            // deeper level may untangle it, as on XOR-shaped data); the
            // depth, purity, and leaf-size rules do the stopping.
            let gain = parent_impurity - weighted;
            if best.map_or(true, |(g, _, _)| gain > g) {
                best = Some((gain, feature, (lo + hi) * 0.5));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return Node::Leaf(majority(labels, indices));
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| features[[i, feature]] <= threshold);
    let left = grow(features, labels, &left_idx, depth_left - 1, min_leaf, feature_subset, rng);
    let right =
        grow(features, labels, &right_idx, depth_left - 1, min_leaf, feature_subset, rng);
    Node::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
}
