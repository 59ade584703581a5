//! Deterministic audio preprocessing: resampling, loudness normalization,
//! silence removal, and log-mel spectrogram extraction.

mod frames;
mod mel;
mod resample;
mod vad;
mod wav;

pub use frames::{sample_partial_frames, FrameBatch, ShortUtterancePolicy};
pub(crate) use mel::mel_channel_center_hz;
pub use mel::{mel_spectrogram, Framing, MelConfig, MelConfigId, MelSpectrogram};
pub use resample::resample;
pub use vad::{trim_silence, VadConfig};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// A mono waveform with its sample rate. Samples are clamped to `[-1, 1]`
/// after any gain stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioSegment {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Root-mean-square level in dBFS (full scale = 1.0).
    pub fn rms_dbfs(&self) -> f64 {
        let energy: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        let rms = (energy / self.samples.len().max(1) as f64).sqrt();
        20.0 * rms.max(1e-12).log10()
    }
}

/// Scales the signal so its RMS level matches `target_dbfs`, clipping the
/// result to `[-1, 1]`.
pub fn normalize_loudness(audio: &AudioSegment, target_dbfs: f64) -> Result<AudioSegment> {
    if audio.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let energy: f64 = audio
        .samples
        .iter()
        .map(|&s| (s as f64) * (s as f64))
        .sum();
    if energy == 0.0 {
        return Err(Error::SilentAudio(
            "cannot scale an all-zero signal".into(),
        ));
    }
    let current = audio.rms_dbfs();
    let gain = 10f64.powf((target_dbfs - current) / 20.0) as f32;
    let samples = audio
        .samples
        .iter()
        .map(|&s| (s * gain).clamp(-1.0, 1.0))
        .collect();
    Ok(AudioSegment::new(samples, audio.sample_rate))
}
