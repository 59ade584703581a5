//! Random fixed-length crop sampling used to build speaker-encoder training
//! batches.

use ndarray::Array3;
use rand::seq::index::sample as sample_without_replacement;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};

/// What to do with utterances shorter than the crop length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShortUtterancePolicy {
    /// Fail with [`Error::UtteranceTooShort`].
    Error,
    /// Drop short utterances before sampling; fails only if a speaker has
    /// none left.
    Skip,
    /// Right-pad short crops with the given log-floor value.
    Pad(FloorPad),
}

/// Carrier for the pad value so the enum stays `Copy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorPad(pub f32);

/// A stacked batch of mel crops: `data` is `[speakers * utterances_per,
/// frames, n_mels]`, grouped by speaker in `speaker_keys` order.
#[derive(Debug, Clone)]
pub struct FrameBatch {
    pub data: Array3<f32>,
    pub speaker_keys: Vec<String>,
    pub utterances_per_speaker: usize,
}

impl FrameBatch {
    pub fn num_speakers(&self) -> usize {
        self.speaker_keys.len()
    }

    pub fn num_frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_mels(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Draws `utterances_per_speaker` random crops of `num_frames` frames from
/// each speaker's utterance pool and stacks them `[S * U, frames, mels]`,
/// time-major within each crop. Speakers are processed in input order and all
/// randomness comes from `seed`, so identical inputs give identical batches.
///
/// Speakers with fewer distinct utterances than `utterances_per_speaker` are
/// sampled with replacement; crop offsets still differ per draw.
pub fn sample_partial_frames(
    speakers: &[(String, Vec<&MelSpectrogram>)],
    utterances_per_speaker: usize,
    num_frames: usize,
    policy: ShortUtterancePolicy,
    seed: u64,
) -> Result<FrameBatch> {
    if speakers.is_empty() {
        return Err(Error::EmptyInput("no speakers to sample from".into()));
    }
    if utterances_per_speaker == 0 || num_frames == 0 {
        return Err(Error::ConfigError(
            "utterances per speaker and frames per crop must be positive".into(),
        ));
    }
    let n_mels = speakers
        .first()
        .and_then(|(_, utts)| utts.first())
        .map(|m| m.n_mels())
        .ok_or_else(|| Error::EmptyInput("first speaker has no utterances".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = speakers.len() * utterances_per_speaker;
    let mut data = Array3::<f32>::zeros((total, num_frames, n_mels));
    let mut speaker_keys = Vec::with_capacity(speakers.len());

    for (s_idx, (key, utterances)) in speakers.iter().enumerate() {
        if utterances.is_empty() {
            return Err(Error::EmptyInput(format!("speaker {key} has no utterances")));
        }
        let usable: Vec<&MelSpectrogram> = match policy {
            ShortUtterancePolicy::Skip => utterances
                .iter()
                .copied()
                .filter(|m| m.num_frames() >= num_frames)
                .collect(),
            _ => utterances.clone(),
        };
        if usable.is_empty() {
            return Err(Error::UtteranceTooShort {
                have: utterances.iter().map(|m| m.num_frames()).max().unwrap_or(0),
                need: num_frames,
            });
        }
        for (m, utt) in usable.iter().enumerate() {
            if utt.n_mels() != n_mels {
                return Err(Error::ConfigMismatch(format!(
                    "speaker {key} utterance {m} has {} mel channels, batch has {n_mels}",
                    utt.n_mels()
                )));
            }
        }

        let chosen: Vec<usize> = if usable.len() >= utterances_per_speaker {
            sample_without_replacement(&mut rng, usable.len(), utterances_per_speaker).into_vec()
        } else {
            (0..utterances_per_speaker)
                .map(|_| rng.random_range(0..usable.len()))
                .collect()
        };

        for (u_idx, &utt_idx) in chosen.iter().enumerate() {
            let utt = usable[utt_idx];
            let t = utt.num_frames();
            let row = s_idx * utterances_per_speaker + u_idx;
            if t >= num_frames {
                let offset = rng.random_range(0..=t - num_frames);
                for f in 0..num_frames {
                    for c in 0..n_mels {
                        data[[row, f, c]] = utt.values[[c, offset + f]];
                    }
                }
            } else {
                match policy {
                    ShortUtterancePolicy::Error | ShortUtterancePolicy::Skip => {
                        return Err(Error::UtteranceTooShort {
                            have: t,
                            need: num_frames,
                        });
                    }
                    ShortUtterancePolicy::Pad(FloorPad(fill)) => {
                        for f in 0..num_frames {
                            for c in 0..n_mels {
                                data[[row, f, c]] =
                                    if f < t { utt.values[[c, f]] } else { fill };
                            }
                        }
                    }
                }
            }
        }
        speaker_keys.push(key.clone());
    }

    Ok(FrameBatch {
        data,
        speaker_keys,
        utterances_per_speaker,
    })
}
