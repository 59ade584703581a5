//! Impairment assessment: pooled features, stratified resampling,
//! classifier families, hyperparameter search, and vote-level metrics.

mod classifiers;
mod features;
mod lda;
mod metrics;
mod search;
mod split;
mod svm;
mod trees;
mod vote;

pub use classifiers::{
    train_classifier, ClassifierKind, ClassifierModel, ClassifierSpec, LinearHeadModel,
    MaxFeatures, SvmKernel, LINEAR_HEAD_LR,
};
pub use features::{
    init_linear_head, linear_head_forward, pool_content_embedding, FeatureVector,
    POOLED_DIM, POOL_BINS,
};
pub use lda::LdaModel;
pub use metrics::{compute_metrics, metrics_from_confusion, ClassLabel, Confusion, Metrics};
pub use search::{
    cross_validated_accuracy, hyperparameter_search, sample_spec, search_over,
    SearchOutcome, DEFAULT_TRIALS,
};
pub use split::{stratified_kfold, stratified_split, FoldAssignment};
pub use svm::SvmModel;
pub use trees::{ForestModel, TreeModel};
pub use vote::majority_vote;
