//! Separation of speech content from speaker identity, with an evaluation
//! harness comparing content and speaker embeddings for binary
//! cognitive-impairment classification.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`audio`] — WAV ingestion, resampling, loudness normalization, voice
//!   activity trimming, and log-mel spectrogram extraction under the two
//!   named configurations (`CONTENT`, `SPEAKER`).
//! - [`nn`] — a small reverse-mode autodiff graph over `ndarray` used by all
//!   trainable models in the crate.
//! - [`speaker`] — the GE2E speaker verification encoder (training,
//!   fine-tuning, EER evaluation, utterance/speaker-level embeddings).
//! - [`separator`] — the autoencoder content-separation framework: content
//!   encoder conditioned on speaker embeddings, two-stage decoder, composite
//!   reconstruction loss, and content-embedding extraction.
//! - [`baselines`] — comparative d-vector and x-vector extractors.
//! - [`assessment`] — pooling, classifiers, stratified splits/CV,
//!   hyperparameter search, majority voting, and metrics.
//! - [`experiments`] — manifests, session augmentation, synthetic corpus
//!   generation, experiment orchestration, 2-D projections, and reports.
//! - [`tensorio`] — the on-disk container for named float32 tensors shared
//!   by checkpoints, spectrograms, and embeddings.

pub mod assessment;
pub mod audio;
pub mod baselines;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod separator;
pub mod speaker;
pub mod tensorio;

pub use error::{Error, Result};
