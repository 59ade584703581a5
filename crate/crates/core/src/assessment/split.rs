//! Stratified splitting: a single train/eval split and k-fold assignments,
//! both preserving class proportions and deterministic under a seed.

use rand::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::metrics::ClassLabel;

/// Fold index per sample, plus the fold count.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    pub folds: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    pub fn eval_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }
}

fn class_indices(labels: &[ClassLabel]) -> Result<(Vec<usize>, Vec<usize>)> {
    let cn: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == ClassLabel::Cn).collect();
    let im: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == ClassLabel::Im).collect();
    if cn.is_empty() || im.is_empty() {
        return Err(Error::DegenerateLabels(
            "stratification needs both classes present".into(),
        ));
    }
    Ok((cn, im))
}

/// Stratified train/eval split by index. Per-class evaluation counts are
/// `round(eval_fraction * class_count)`; if their sum misses the rounded
/// global target, the class whose unrounded share sits closest to its
/// rounding boundary is adjusted by one. Returns `(train, eval)` index
/// lists, each sorted.
pub fn stratified_split(
    labels: &[ClassLabel],
    eval_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&eval_fraction) || eval_fraction <= 0.0 {
        return Err(Error::ConfigError(format!(
            "eval_fraction must lie in (0, 1), got {eval_fraction}"
        )));
    }
    let (cn, im) = class_indices(labels)?;
    let total_eval = (eval_fraction * labels.len() as f64).round() as usize;

    let exact = [cn.len() as f64 * eval_fraction, im.len() as f64 * eval_fraction];
    let mut counts = [exact[0].round() as usize, exact[1].round() as usize];
    while counts[0] + counts[1] != total_eval {
        // Adjust the class with the largest rounding slack toward the target.
        let need_more = counts[0] + counts[1] < total_eval;
        let slack = |i: usize| {
            if need_more {
                exact[i] - counts[i] as f64
            } else {
                counts[i] as f64 - exact[i]
            }
        };
        let pick = if slack(0) >= slack(1) { 0 } else { 1 };
        if need_more {
            counts[pick] += 1;
        } else {
            counts[pick] -= 1;
        }
    }
    if counts[0] > cn.len() || counts[1] > im.len() || counts[0] == 0 || counts[1] == 0 {
        return Err(Error::DegenerateLabels(format!(
            "eval allocation {counts:?} infeasible for class sizes {}/{}",
            cn.len(),
            im.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval = Vec::with_capacity(total_eval);
    let mut train = Vec::with_capacity(labels.len() - total_eval);
    for (pool, n_eval) in [(cn, counts[0]), (im, counts[1])] {
        let mut shuffled = pool;
        shuffled.shuffle(&mut rng);
        eval.extend_from_slice(&shuffled[..n_eval]);
        train.extend_from_slice(&shuffled[n_eval..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval))
}

/// Stratified k-fold assignment: each class is shuffled and dealt to folds
/// so per-fold class counts differ by at most one.
pub fn stratified_kfold(labels: &[ClassLabel], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::ConfigError(format!("k must be >= 2, got {k}")));
    }
    let (cn, im) = class_indices(labels)?;
    if cn.len() < k || im.len() < k {
        return Err(Error::DegenerateLabels(format!(
            "every class needs >= {k} members, have {}/{}",
            cn.len(),
            im.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0usize; labels.len()];
    for pool in [cn, im] {
        let mut shuffled = pool;
        shuffled.shuffle(&mut rng);
        for (pos, idx) in shuffled.into_iter().enumerate() {
            folds[idx] = pos % k;
        }
    }
    Ok(FoldAssignment { folds, k })
}
