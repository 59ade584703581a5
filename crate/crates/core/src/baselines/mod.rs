//! Comparative speaker-embedding baselines: d-vectors (recurrent +
//! attentive pooling, 256-dim) and x-vectors (time-delay + statistics
//! pooling, 512-dim).

pub mod dvector;
pub mod pooling;
pub mod xvector;

pub use dvector::{
    d_vector, forward_batch_dvector, init_dvector, train_dvector, DVector, DVectorConfig,
    DVectorTrainConfig, DVectorTrainOutcome, DVECTOR_DIM,
};
pub use pooling::{
    attentive_pooling, attentive_pooling_graph, statistics_pooling, statistics_pooling_graph,
};
pub use xvector::{
    forward_batch_xvector, init_xvector, train_xvector, x_vector, XVector, XVectorConfig,
    XVectorTrainConfig, XVectorTrainOutcome, RECEPTIVE_FIELD, TDNN_CONTEXTS, XVECTOR_DIM,
};
