//! Speaker verification: GE2E loss, encoder, training/finetuning, and EER
//! evaluation.

mod eer;
mod encoder;
mod ge2e;
mod train;

pub use eer::{equal_error_rate, Trial};
pub use encoder::{
    average_speaker_embedding, embed_utterance, forward_batch, init_speaker_encoder,
    one_hot_speaker_embedding, window_starts, EmbeddingLevel, SpeakerEmbedding,
    SpeakerEncoderConfig, FINETUNE_PREFIXES, RECURRENT_PREFIX, SIM_B, SIM_W,
};
pub use ge2e::{flatten_batch, ge2e_loss, ge2e_loss_graph, ge2e_similarity_matrix, Ge2eBatch};
pub use train::{train_speaker_encoder, SpeakerTrainConfig, SpeakerTrainOutcome, TrainMode};
