//! Content-embedding extraction for downstream classification.

use crate::audio::MelSpectrogram;
use crate::error::Result;
use crate::nn::params::Params;

use super::condition::ConditioningSource;
use super::model::{content_encode, ContentEmbedding, SeparatorConfig};

/// Extracts the 64 x K content embedding for one utterance, resolving the
/// speaker's conditioning vector from `conditioner` (a missing speaker is an
/// error, not a silent fallback).
pub fn extract_content(
    mel: &MelSpectrogram,
    speaker_key: &str,
    conditioner: &ConditioningSource,
    params: &Params,
    config: &SeparatorConfig,
) -> Result<ContentEmbedding> {
    let cond = conditioner.resolve(speaker_key)?;
    content_encode(mel, &cond, params, config)
}
