//! Seeded random hyperparameter search scored by cross-validated accuracy.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::classifiers::{
    train_classifier, ClassifierKind, ClassifierSpec, MaxFeatures, SvmKernel,
};
use super::metrics::ClassLabel;
use super::split::{stratified_kfold, FoldAssignment};

/// Default number of sampled configurations per family.
pub const DEFAULT_TRIALS: usize = 50;

/// Winner of a search: the configuration with the best mean fold accuracy.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub spec: ClassifierSpec,
    pub mean_accuracy: f64,
    pub trials_evaluated: usize,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (llo + rng.random_range(0.0..1.0) * (lhi - llo)).exp()
}

/// Draws one configuration from the family's documented range.
pub fn sample_spec(kind: ClassifierKind, rng: &mut ChaCha8Rng) -> ClassifierSpec {
    match kind {
        ClassifierKind::Lda => {
            // One in five draws disables shrinkage entirely.
            let shrinkage = if rng.random_range(0..5) == 0 {
                None
            } else {
                Some(rng.random_range(0.0..=1.0))
            };
            ClassifierSpec::Lda { shrinkage }
        }
        ClassifierKind::Svm => {
            let c = log_uniform(rng, 1e-2, 1e2);
            let kernel = if rng.random_range(0..2) == 0 {
                SvmKernel::Linear
            } else {
                SvmKernel::Rbf { gamma: log_uniform(rng, 1e-4, 1.0) }
            };
            ClassifierSpec::Svm { c, kernel }
        }
        ClassifierKind::Dt => ClassifierSpec::Dt {
            max_depth: rng.random_range(2..=20),
            min_leaf: rng.random_range(1..=10),
        },
        ClassifierKind::Rf => ClassifierSpec::Rf {
            trees: rng.random_range(50..=500),
            max_depth: rng.random_range(2..=20),
            max_features: if rng.random_range(0..2) == 0 {
                MaxFeatures::Sqrt
            } else {
                MaxFeatures::Log2
            },
        },
        ClassifierKind::LinearHead => ClassifierSpec::LinearHead {
            lr: log_uniform(rng, 1e-4, 1e-2),
            weight_decay: log_uniform(rng, 1e-6, 1e-2),
        },
    }
}

/// Mean accuracy of `spec` over the folds: each fold trains on its
/// complement and scores on its members.
pub fn cross_validated_accuracy(
    spec: &ClassifierSpec,
    features: &Array2<f32>,
    labels: &[ClassLabel],
    folds: &FoldAssignment,
    seed: u64,
) -> Result<f64> {
    if features.nrows() != labels.len() {
        return Err(Error::ShapeError(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for fold in 0..folds.k {
        let train_idx = folds.train_indices(fold);
        let eval_idx = folds.eval_indices(fold);
        let gather = |idx: &[usize]| {
            let x = Array2::from_shape_fn((idx.len(), features.ncols()), |(r, c)| {
                features[[idx[r], c]]
            });
            let y: Vec<ClassLabel> = idx.iter().map(|&i| labels[i]).collect();
            (x, y)
        };
        let (train_x, train_y) = gather(&train_idx);
        let (eval_x, eval_y) = gather(&eval_idx);
        let model =
            train_classifier(spec, &train_x, &train_y, seed.wrapping_add(fold as u64))?;
        let preds = model.predict(&eval_x)?;
        let hits = preds.iter().zip(&eval_y).filter(|(p, t)| p == t).count();
        total += hits as f64 / eval_y.len() as f64;
    }
    Ok(total / folds.k as f64)
}

/// Scores every candidate and keeps the best mean accuracy; ties go to the
/// earliest candidate so the outcome is order-stable.
pub fn search_over(
    specs: &[ClassifierSpec],
    features: &Array2<f32>,
    labels: &[ClassLabel],
    folds: &FoldAssignment,
    seed: u64,
) -> Result<SearchOutcome> {
    if specs.is_empty() {
        return Err(Error::ConfigError("search needs at least one candidate".into()));
    }
    let mut best: Option<SearchOutcome> = None;
    for (i, spec) in specs.iter().enumerate() {
        let trial_seed = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let score = cross_validated_accuracy(spec, features, labels, folds, trial_seed)?;
        let better = best.as_ref().map_or(true, |b| score > b.mean_accuracy);
        if better {
            best = Some(SearchOutcome {
                spec: spec.clone(),
                mean_accuracy: score,
                trials_evaluated: specs.len(),
            });
        }
    }
    Ok(best.expect("at least one candidate was scored"))
}

/// Samples `n_trials` configurations from the family's range and returns
/// the cross-validation winner. Folds are stratified on the labels.
pub fn hyperparameter_search(
    kind: ClassifierKind,
    features: &Array2<f32>,
    labels: &[ClassLabel],
    n_trials: usize,
    k: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    if n_trials == 0 {
        return Err(Error::ConfigError("n_trials must be at least 1".into()));
    }
    let folds = stratified_kfold(labels, k, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<ClassifierSpec> =
        (0..n_trials).map(|_| sample_spec(kind, &mut rng)).collect();
    search_over(&specs, features, labels, &folds, seed)
}
