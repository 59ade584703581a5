//! Band-limited sample-rate conversion with a Hann-windowed sinc kernel.

use crate::audio::AudioSegment;
use crate::error::{Error, Result};

/// Half-width of the interpolation kernel in source samples at unity cutoff.
/// When downsampling, the kernel is widened by the inverse cutoff so the
/// transition band stays proportionally narrow.
const KERNEL_HALF_WIDTH: f64 = 32.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Converts `audio` to `target_rate`. Equal rates return the input unchanged.
/// Output length is `round(len * target / source)`, so duration is preserved
/// to within one output sample.
pub fn resample(audio: &AudioSegment, target_rate: u32) -> Result<AudioSegment> {
    if target_rate == 0 {
        return Err(Error::ConfigError("target sample rate must be positive".into()));
    }
    if audio.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if audio.sample_rate == target_rate {
        return Ok(audio.clone());
    }

    let src_rate = audio.sample_rate as f64;
    let ratio = target_rate as f64 / src_rate;
    let out_len = ((audio.len() as f64) * ratio).round().max(1.0) as usize;

    // Anti-aliasing: low-pass at the narrower of the two Nyquist limits,
    // expressed as a fraction of the source Nyquist frequency.
    let cutoff = ratio.min(1.0);
    let half_width = KERNEL_HALF_WIDTH / cutoff;

    let src = &audio.samples;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = n as f64 / ratio;
        let lo = ((center - half_width).ceil() as i64).max(0) as usize;
        let hi = ((center + half_width).floor() as i64).min(src.len() as i64 - 1) as usize;
        let mut acc = 0.0f64;
        for k in lo..=hi {
            let d = center - k as f64;
            let window = 0.5 + 0.5 * (std::f64::consts::PI * d / half_width).cos();
            acc += src[k] as f64 * cutoff * sinc(cutoff * d) * window;
        }
        out.push(acc as f32);
    }
    Ok(AudioSegment::new(out, target_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, rate: u32) -> AudioSegment {
        let n = (secs * rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() as f32 * 0.5)
            .collect();
        AudioSegment::new(samples, rate)
    }

    /// Locates the dominant frequency of a signal by brute-force DFT probing
    /// at 0.5 Hz resolution — an oracle independent of the resampler.
    fn dominant_freq_hz(audio: &AudioSegment, lo: f64, hi: f64) -> f64 {
        let mut best = (lo, f64::MIN);
        let mut f = lo;
        while f <= hi {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            let w = 2.0 * std::f64::consts::PI * f / audio.sample_rate as f64;
            for (i, &s) in audio.samples.iter().enumerate() {
                re += s as f64 * (w * i as f64).cos();
                im += s as f64 * (w * i as f64).sin();
            }
            let mag = re * re + im * im;
            if mag > best.1 {
                best = (f, mag);
            }
            f += 0.5;
        }
        best.0
    }

    #[test]
    fn identity_when_rates_match() {
        let audio = sine(440.0, 0.25, 16_000);
        let out = resample(&audio, 16_000).unwrap();
        assert_eq!(out.samples, audio.samples);
    }

    #[test]
    fn downsample_44k1_to_16k_preserves_tone_and_duration() {
        let audio = sine(440.0, 1.0, 44_100);
        let out = resample(&audio, 16_000).unwrap();
        assert_eq!(out.sample_rate, 16_000);
        let expected_len = (44_100.0f64 * 16_000.0 / 44_100.0).round() as usize;
        assert_eq!(out.len(), expected_len);
        let peak = dominant_freq_hz(&out, 400.0, 480.0);
        assert!(
            (peak - 440.0).abs() <= 2.0,
            "tone drifted to {peak} Hz after downsampling"
        );
    }

    #[test]
    fn upsample_8k_to_16k_preserves_tone() {
        let audio = sine(440.0, 1.0, 8_000);
        let out = resample(&audio, 16_000).unwrap();
        assert_eq!(out.len(), 16_000);
        let peak = dominant_freq_hz(&out, 400.0, 480.0);
        assert!((peak - 440.0).abs() <= 2.0, "tone drifted to {peak} Hz");
    }

    #[test]
    fn downsampling_suppresses_content_above_target_nyquist() {
        // 10 kHz tone is above the 8 kHz Nyquist of a 16 kHz output and must
        // be attenuated rather than aliased into the passband.
        let audio = sine(10_000.0, 0.5, 44_100);
        let out = resample(&audio, 16_000).unwrap();
        let rms: f64 = (out
            .samples
            .iter()
            .map(|&s| (s as f64).powi(2))
            .sum::<f64>()
            / out.len() as f64)
            .sqrt();
        let in_rms = 0.5 / 2f64.sqrt();
        assert!(
            rms < in_rms * 0.05,
            "out-of-band tone leaked through: rms {rms:.4} vs input {in_rms:.4}"
        );
    }

    #[test]
    fn amplitude_is_preserved_in_passband() {
        let audio = sine(440.0, 1.0, 44_100);
        let out = resample(&audio, 16_000).unwrap();
        let mid = &out.samples[2000..14_000];
        let rms: f64 =
            (mid.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / mid.len() as f64).sqrt();
        let expected = 0.5 / 2f64.sqrt();
        assert!(
            (rms - expected).abs() / expected < 0.02,
            "passband gain error: rms {rms:.4} vs {expected:.4}"
        );
    }

    #[test]
    fn empty_input_is_rejected() {
        let audio = AudioSegment {
            samples: vec![],
            sample_rate: 44_100,
        };
        assert!(matches!(resample(&audio, 16_000), Err(Error::EmptyAudio)));
    }
}
