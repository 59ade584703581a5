//! Corpus bookkeeping and experiment orchestration: the session manifest
//! and its augmentation/grouping policies, the synthetic speech corpus,
//! condition configs and the end-to-end runner, 2-D embedding projection
//! for plots, and the persisted evaluation report.

mod manifest;
mod project;
mod report;
mod runner;
mod synth;

pub use manifest::{
    augment_sessions, base_speaker_id, combine_speaker_sessions, load_manifest, save_manifest,
    Manifest, SessionPolicy, Sex, SpeechRecord, CSV_HEADER, SESSION_KEY_SEP,
};
pub use project::project_embeddings_2d;
pub use report::{
    emit_report, parse_report, unix_timestamp, ClassifierOutcome, EvalReport, FORMAT_TAG,
};
pub use runner::{
    conditioning_embeddings, grouped_speaker_mels, preprocess_manifest, run_condition,
    ConditioningMode, EmbeddingKind, ExperimentConfig, RecordMels,
};
pub use synth::{
    dementiabank_structure_manifest, generate_synthetic_corpus, voiced_segment_rate, welch_t,
    CorpusSpec, SYNTH_SAMPLE_RATE,
};
