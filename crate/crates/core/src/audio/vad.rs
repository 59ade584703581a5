//! Energy-based voice activity detection used to strip silent and
//! near-silent spans before feature extraction.

use crate::audio::AudioSegment;
use crate::error::{Error, Result};

/// Controls for energy-based silence trimming.
#[derive(Debug, Clone)]
pub struct VadConfig {
    /// Analysis window length in milliseconds (non-overlapping).
    pub window_ms: f64,
    /// Scales how far below the peak level a window may fall and still count
    /// as speech: the keep range is `30 dB / aggressiveness`. Larger values
    /// remove more audio.
    pub aggressiveness: f64,
    /// Windows below this absolute level are always treated as silence, and
    /// signals whose peak window is below it are rejected outright.
    pub floor_dbfs: f64,
    /// Hysteresis: once inside a speech region, the level may drop this many
    /// dB below the onset threshold before the region closes.
    pub hysteresis_db: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            window_ms: 30.0,
            aggressiveness: 1.0,
            floor_dbfs: -60.0,
            hysteresis_db: 6.0,
        }
    }
}

fn window_rms_dbfs(window: &[f32]) -> f64 {
    let energy: f64 = window.iter().map(|&s| (s as f64) * (s as f64)).sum();
    let rms = (energy / window.len() as f64).sqrt();
    if rms <= 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * rms.log10()
    }
}

/// Removes silent spans by concatenating the windows judged voiced. A signal
/// judged voiced everywhere is returned unchanged sample-for-sample.
pub fn trim_silence(audio: &AudioSegment, config: &VadConfig) -> Result<AudioSegment> {
    if audio.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if config.window_ms <= 0.0 || config.aggressiveness <= 0.0 {
        return Err(Error::ConfigError(
            "vad window and aggressiveness must be positive".into(),
        ));
    }
    let win = ((config.window_ms / 1000.0) * audio.sample_rate as f64).round() as usize;
    let win = win.max(1);

    let windows: Vec<&[f32]> = audio.samples.chunks(win).collect();
    let levels: Vec<f64> = windows.iter().map(|w| window_rms_dbfs(w)).collect();
    let peak = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak < config.floor_dbfs {
        return Err(Error::SilentAudio(format!(
            "peak window level {peak:.1} dBFS is below the {:.1} dBFS floor",
            config.floor_dbfs
        )));
    }

    let on_threshold = peak - 30.0 / config.aggressiveness;
    let off_threshold = on_threshold - config.hysteresis_db;

    let mut kept = Vec::new();
    let mut in_speech = false;
    for (window, &level) in windows.iter().zip(&levels) {
        let voiced = if level < config.floor_dbfs {
            false
        } else if in_speech {
            level >= off_threshold
        } else {
            level >= on_threshold
        };
        in_speech = voiced;
        if voiced {
            kept.extend_from_slice(window);
        }
    }
    if kept.is_empty() {
        return Err(Error::SilentAudio(
            "no window exceeded the speech threshold".into(),
        ));
    }
    Ok(AudioSegment::new(kept, audio.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(secs: f64, rate: u32, amp: f32) -> Vec<f32> {
        let n = (secs * rate as f64).round() as usize;
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 300.0 * i as f64 / rate as f64).sin() as f32)
            .collect()
    }

    #[test]
    fn trailing_silence_is_removed() {
        let rate = 16_000;
        let mut samples = tone(1.0, rate, 0.3);
        samples.extend(std::iter::repeat(0.0f32).take(rate as usize));
        let audio = AudioSegment::new(samples, rate);
        let out = trim_silence(&audio, &VadConfig::default()).unwrap();
        // One second of tone survives, to within one analysis window.
        let win = (0.030 * rate as f64) as usize;
        assert!((out.len() as i64 - rate as i64).unsigned_abs() as usize <= win);
    }

    #[test]
    fn fully_voiced_signal_is_unchanged() {
        let rate = 16_000;
        let audio = AudioSegment::new(tone(0.737, rate, 0.3), rate);
        let out = trim_silence(&audio, &VadConfig::default()).unwrap();
        assert_eq!(out.samples, audio.samples);
    }

    #[test]
    fn pure_silence_is_rejected() {
        let audio = AudioSegment::new(vec![0.0; 16_000], 16_000);
        assert!(matches!(
            trim_silence(&audio, &VadConfig::default()),
            Err(Error::SilentAudio(_))
        ));
    }

    #[test]
    fn sub_floor_noise_is_rejected() {
        // Uniform-ish noise at about -80 dBFS sits below the -60 dBFS floor.
        let samples: Vec<f32> = (0..16_000u32)
            .map(|i| (i.wrapping_mul(2_654_435_761) as f32 / u32::MAX as f32 - 0.5) * 2e-4)
            .collect();
        let audio = AudioSegment::new(samples, 16_000);
        assert!(matches!(
            trim_silence(&audio, &VadConfig::default()),
            Err(Error::SilentAudio(_))
        ));
    }

    #[test]
    fn interior_pause_is_removed() {
        let rate = 16_000;
        let mut samples = tone(0.5, rate, 0.3);
        samples.extend(std::iter::repeat(0.0f32).take(rate as usize / 2));
        samples.extend(tone(0.5, rate, 0.3));
        let audio = AudioSegment::new(samples, rate);
        let out = trim_silence(&audio, &VadConfig::default()).unwrap();
        let win = (0.030 * rate as f64) as usize;
        assert!((out.len() as i64 - rate as i64).unsigned_abs() as usize <= 2 * win);
    }

    #[test]
    fn higher_aggressiveness_removes_more() {
        let rate = 16_000;
        let mut samples = tone(0.5, rate, 0.5);
        samples.extend(tone(0.5, rate, 0.02)); // about -28 dB below the loud span
        let audio = AudioSegment::new(samples, rate);
        let lenient = trim_silence(&audio, &VadConfig::default()).unwrap();
        let strict = trim_silence(
            &audio,
            &VadConfig {
                aggressiveness: 2.0,
                ..VadConfig::default()
            },
        )
        .unwrap();
        assert!(lenient.len() > strict.len());
        assert_eq!(lenient.len(), audio.len()); // -28 dB is inside the 30 dB range
        let win = (0.030 * rate as f64) as usize;
        assert!((strict.len() as i64 - rate as i64 / 2).unsigned_abs() as usize <= win);
    }
}
