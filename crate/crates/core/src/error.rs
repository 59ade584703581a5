//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("empty audio input")]
    EmptyAudio,

    #[error("silent audio: {0}")]
    SilentAudio(String),

    #[error("audio too short: {0}")]
    AudioTooShort(String),

    #[error("utterance shorter than requested crop: have {have} frames, need {need}")]
    UtteranceTooShort { have: usize, need: usize },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("mixed speaker ids in embedding average: {0} vs {1}")]
    MixedSpeakers(String, String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("degenerate trials: need at least one target and one non-target score")]
    DegenerateTrials,

    #[error("index {index} out of range for {len} speakers")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no speaker embedding available for `{0}`")]
    MissingSpeaker(String),

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("empty content embedding (zero time columns)")]
    EmptyEmbedding,

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("degenerate sequence: {0}")]
    DegenerateSequence(String),

    #[error("even voter count {0} risks ties; use an odd number of folds")]
    TieRisk(usize),

    #[error("parse error at row {row}: {message}")]
    ParseError { row: usize, message: String },

    #[error("duplicate record for speaker `{speaker}` session {session}")]
    DuplicateRecord { speaker: String, session: u32 },

    #[error("manifest already augmented")]
    AlreadyAugmented,

    #[error("invalid configuration: {0}")]
    ConfigError(String),

    #[error("missing artifact for stage `{stage}`: {detail}")]
    MissingArtifact { stage: String, detail: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("malformed tensor container: {0}")]
    BadContainer(String),

    #[error("tensor `{0}` not found in container")]
    TensorNotFound(String),

    #[error("wav error: {0}")]
    Wav(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
