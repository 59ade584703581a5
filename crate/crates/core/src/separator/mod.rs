//! Content/speaker separation: a conditioned autoencoder whose bottleneck
//! carries speech content while the conditioning vector carries identity.

pub mod condition;
pub mod extract;
pub mod loss;
pub mod model;
pub mod train;

pub use condition::ConditioningSource;
pub use extract::extract_content;
pub use loss::{
    separation_loss, separation_loss_graph, SeparationLossBreakdown, SeparationLossNodes,
    DEFAULT_LAMBDA, DEFAULT_MU,
};
pub use model::{
    content_encode, decode, decode_graph, encode_graph, init_separator, num_code_cols, padded_len,
    ContentEmbedding, ReconstructionPair, SeparatorConfig, CODE_DIM, DOWNSAMPLE,
};
pub use train::{
    train_separator, SeparatorTrainConfig, SeparatorTrainOutcome, SeparatorUtterance,
};
