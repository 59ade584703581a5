//! Log-mel spectrogram extraction. Two fixed presets cover the two feature
//! consumers: wide-window content features and narrow-window speaker
//! features.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::AudioSegment;
use crate::error::{Error, Result};

/// How frames are laid over the waveform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framing {
    /// Frames must fit entirely inside the signal:
    /// `T = 1 + floor((len - window) / hop)`. Inputs shorter than one window
    /// are rejected.
    Valid,
    /// Frames are centered on multiples of the hop with zero padding at the
    /// edges: `T = ceil(len / hop)`.
    Centered,
}

/// Identifies which preset produced a spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MelConfigId {
    Content,
    Speaker,
}

impl std::fmt::Display for MelConfigId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MelConfigId::Content => write!(f, "CONTENT"),
            MelConfigId::Speaker => write!(f, "SPEAKER"),
        }
    }
}

/// Parameters for log-mel extraction. Use [`MelConfig::content`] or
/// [`MelConfig::speaker`]; all downstream models assume one of the two.
#[derive(Debug, Clone)]
pub struct MelConfig {
    pub id: MelConfigId,
    pub n_mels: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    pub fmax: f64,
    /// Added inside the log: `ln(energy + log_eps)`. Zero energy therefore
    /// maps exactly to the floor value `ln(log_eps)`.
    pub log_eps: f64,
    pub framing: Framing,
}

impl MelConfig {
    /// 80-channel features over 64 ms windows with 16 ms hops, valid framing.
    /// At 16 kHz this is a 1024-sample window and 256-sample hop, so one
    /// second of audio yields 59 frames.
    pub fn content() -> Self {
        Self {
            id: MelConfigId::Content,
            n_mels: 80,
            window_ms: 64.0,
            hop_ms: 16.0,
            fmin: 0.0,
            fmax: 8000.0,
            log_eps: 1e-6,
            framing: Framing::Valid,
        }
    }

    /// 40-channel features over 25 ms windows with 10 ms hops, centered
    /// framing. At 16 kHz this is a 400-sample window and 160-sample hop, so
    /// 1600 ms of audio yields exactly 160 frames.
    pub fn speaker() -> Self {
        Self {
            id: MelConfigId::Speaker,
            n_mels: 40,
            window_ms: 25.0,
            hop_ms: 10.0,
            fmin: 0.0,
            fmax: 8000.0,
            log_eps: 1e-6,
            framing: Framing::Centered,
        }
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        ((self.window_ms / 1000.0) * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        ((self.hop_ms / 1000.0) * sample_rate as f64).round() as usize
    }

    pub fn n_fft(&self, sample_rate: u32) -> usize {
        self.window_samples(sample_rate).next_power_of_two()
    }

    /// Smallest log value any cell can take.
    pub fn log_floor(&self) -> f32 {
        (self.log_eps as f32).ln()
    }

    /// Number of frames produced for `len` samples, or an error when the
    /// framing cannot cover the input.
    pub fn num_frames(&self, len: usize, sample_rate: u32) -> Result<usize> {
        if len == 0 {
            return Err(Error::EmptyAudio);
        }
        let win = self.window_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        match self.framing {
            Framing::Valid => {
                if len < win {
                    Err(Error::AudioTooShort(format!(
                        "{len} samples is shorter than one {win}-sample analysis window"
                    )))
                } else {
                    Ok(1 + (len - win) / hop)
                }
            }
            Framing::Centered => Ok(len.div_ceil(hop)),
        }
    }
}

/// A `[n_mels, frames]` grid of natural-log mel energies plus provenance.
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    pub values: Array2<f32>,
    pub config_id: MelConfigId,
    pub source_id: String,
}

impl MelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.values.ncols()
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank rows over the one-sided power spectrum bins.
fn mel_filterbank(config: &MelConfig, sample_rate: u32) -> Array2<f64> {
    let n_fft = config.n_fft(sample_rate);
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(config.fmin);
    let mel_hi = hz_to_mel(config.fmax);
    let band_edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();

    let mut bank = Array2::zeros((config.n_mels, n_bins));
    for m in 0..config.n_mels {
        let (left, center, right) = (band_edges[m], band_edges[m + 1], band_edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f <= left || f >= right {
                0.0
            } else if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            bank[[m, k]] = w;
        }
    }
    bank
}

/// Center frequency (Hz) of mel channel `m` under `config`'s band layout.
/// Exposed for tests that predict which channel a pure tone lands in.
pub(crate) fn mel_channel_center_hz(config: &MelConfig, m: usize) -> f64 {
    let mel_lo = hz_to_mel(config.fmin);
    let mel_hi = hz_to_mel(config.fmax);
    mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) as f64 / (config.n_mels + 1) as f64)
}

/// Computes the log-mel spectrogram of `audio` under `config`. `source_id`
/// is carried through unchanged so downstream batches can name their origin.
pub fn mel_spectrogram(
    audio: &AudioSegment,
    config: &MelConfig,
    source_id: &str,
) -> Result<MelSpectrogram> {
    let sample_rate = audio.sample_rate;
    let frames = config.num_frames(audio.len(), sample_rate)?;
    let win = config.window_samples(sample_rate);
    let hop = config.hop_samples(sample_rate);
    let n_fft = config.n_fft(sample_rate);
    let n_bins = n_fft / 2 + 1;

    let hann: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos())
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buffer = vec![Complex::new(0.0, 0.0); n_fft];

    let bank = mel_filterbank(config, sample_rate);
    let mut power = Array2::<f64>::zeros((n_bins, frames));
    let samples = &audio.samples;

    for t in 0..frames {
        let start: i64 = match config.framing {
            Framing::Valid => (t * hop) as i64,
            Framing::Centered => (t * hop) as i64 - (win / 2) as i64,
        };
        for (i, slot) in buffer.iter_mut().enumerate().take(n_fft) {
            let idx = start + i as i64;
            let value = if i < win && idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize] as f64 * hann[i]
            } else {
                0.0
            };
            *slot = Complex::new(value, 0.0);
        }
        fft.process(&mut buffer);
        for k in 0..n_bins {
            power[[k, t]] = buffer[k].norm_sqr();
        }
    }

    let mel_energy = bank.dot(&power);
    let values = mel_energy.mapv(|e| (e + config.log_eps).ln() as f32);
    Ok(MelSpectrogram {
        values,
        config_id: config.id,
        source_id: source_id.to_string(),
    })
}
