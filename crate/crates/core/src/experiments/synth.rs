//! Synthetic speech corpus: harmonic "syllable" trains with per-speaker
//! formant/pitch identities and class-dependent timing, plus a manifest
//! builder replicating the published DementiaBank Pitt visit structure.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assessment::ClassLabel;
use crate::audio::{mel_channel_center_hz, write_wav, AudioSegment, MelConfig};
use crate::error::{Error, Result};

use super::manifest::{Manifest, Sex, SpeechRecord};

/// Sample rate of every generated file.
pub const SYNTH_SAMPLE_RATE: u32 = 16_000;

/// Size and seeding of a synthetic corpus.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_speakers: usize,
    /// Recordings per (speaker, session).
    pub utterances_per_speaker: usize,
    pub sessions_per_speaker: usize,
    /// 1 = all CN; 2 = speakers alternate CN/IM.
    pub content_classes: usize,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 2 {
            return Err(Error::ConfigError(format!(
                "need at least 2 speakers, got {}",
                self.n_speakers
            )));
        }
        if self.utterances_per_speaker == 0 || self.sessions_per_speaker == 0 {
            return Err(Error::ConfigError(
                "utterances_per_speaker and sessions_per_speaker must be positive".into(),
            ));
        }
        if !(1..=2).contains(&self.content_classes) {
            return Err(Error::ConfigError(format!(
                "content_classes must be 1 or 2, got {}",
                self.content_classes
            )));
        }
        Ok(())
    }
}

/// Identity cues: pitch plus three formant resonances. Formant centers are
/// drawn from distinct mel-channel bands so identities are spread uniformly
/// on the perceptual scale the encoders consume.
#[derive(Debug, Clone)]
struct SpeakerProfile {
    f0: f64,
    formants: [f64; 3],
    bandwidths: [f64; 3],
}

impl SpeakerProfile {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let mel = MelConfig::content();
        let bands = [10..22usize, 30..46, 52..70];
        let mut formants = [0.0; 3];
        let mut bandwidths = [0.0; 3];
        for (i, band) in bands.into_iter().enumerate() {
            let channel = rng.random_range(band);
            formants[i] = mel_channel_center_hz(&mel, channel);
            bandwidths[i] = rng.random_range(60.0..140.0);
        }
        Self { f0: rng.random_range(90.0..235.0), formants, bandwidths }
    }
}

/// Class-dependent timing: the impaired class speaks with a slower syllabic
/// rate and inserts long pauses; identity cues are untouched.
#[derive(Debug, Clone, Copy)]
struct TimingProfile {
    syllable_rate: f64,
    /// Insert a pause after roughly this many syllables (0 = never).
    pause_every: usize,
    pause_secs: f64,
}

fn timing_for(label: ClassLabel, rng: &mut ChaCha8Rng) -> TimingProfile {
    match label {
        ClassLabel::Cn => TimingProfile {
            syllable_rate: rng.random_range(3.9..4.5),
            pause_every: rng.random_range(5..=7),
            pause_secs: rng.random_range(0.12..0.22),
        },
        ClassLabel::Im => TimingProfile {
            syllable_rate: rng.random_range(2.4..2.8),
            pause_every: rng.random_range(2..=4),
            pause_secs: rng.random_range(0.35..0.7),
        },
    }
}

const SYLLABLES_PER_UTTERANCE: usize = 14;
/// True-silence gap between syllables. Longer than the envelope detector's
/// 25 ms RMS window (so every syllable registers as a voiced segment) but
/// shorter than the 64 ms content-analysis window (so the spectrogram the
/// autoencoder reconstructs stays smooth across syllable boundaries).
const SYLLABLE_GAP_SECS: f64 = 0.045;
/// Onset/offset cosine ramp of each syllable.
const RAMP_SECS: f64 = 0.02;
const EDGE_SILENCE_SECS: f64 = 0.1;
const PEAK_AMPLITUDE: f32 = 0.6;

/// Mixes two words into a fresh stream seed, so every utterance draws from
/// its own deterministic stream regardless of generation order.
fn mix_seed(a: u64, b: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x.wrapping_mul(0x94D0_49BB_1331_11EB)
}

/// Synthesizes one utterance: a train of Hann-windowed harmonic syllables
/// shaped by the speaker's formants, with timing set by the class profile.
fn synthesize_utterance(
    profile: &SpeakerProfile,
    timing: &TimingProfile,
    session_drift: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let sr = SYNTH_SAMPLE_RATE as f64;
    // Pitch is a speaker/session identity cue: holding it fixed across a
    // session keeps the harmonic comb predictable from the speaker identity,
    // which is what lets a conditioned decoder reconstruct it.
    let f0 = profile.f0 * session_drift;
    let period = 1.0 / timing.syllable_rate;
    let voiced = period * VOICED_FRACTION;

    // Harmonic amplitudes under the formant envelope.
    let n_harmonics = (7600.0 / f0).floor() as usize;
    let mut amps = Vec::with_capacity(n_harmonics);
    let mut amp_sum = 0.0f64;
    for k in 1..=n_harmonics {
        let f = k as f64 * f0;
        let mut a = 1e-4;
        for j in 0..3 {
            let z = (f - profile.formants[j]) / profile.bandwidths[j];
            a += (-z * z).exp();
        }
        amp_sum += a;
        amps.push(a);
    }
    for a in &mut amps {
        *a /= amp_sum;
    }

    let mut samples: Vec<f32> = Vec::new();
    let push_silence = |samples: &mut Vec<f32>, secs: f64| {
        samples.resize(samples.len() + (secs * sr).round() as usize, 0.0);
    };
    push_silence(&mut samples, EDGE_SILENCE_SECS);
    for syllable in 0..SYLLABLES_PER_UTTERANCE {
        let n = (voiced * sr).round() as usize;
        let start = samples.len();
        samples.resize(start + n, 0.0);
        for i in 0..n {
            let t = i as f64 / sr;
            let env = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos());
            let mut v = 0.0f64;
            for (k, a) in amps.iter().enumerate() {
                v += a * (2.0 * std::f64::consts::PI * (k + 1) as f64 * f0 * t).sin();
            }
            samples[start + i] = (v * env) as f32;
        }
        push_silence(&mut samples, period - voiced);
        if timing.pause_every > 0 && (syllable + 1) % timing.pause_every == 0 {
            push_silence(&mut samples, timing.pause_secs);
        }
    }
    push_silence(&mut samples, EDGE_SILENCE_SECS);

    // Peak-normalize, then lay a quiet seeded noise floor so no stretch is
    // digitally silent.
    let peak = samples.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-12);
    let gain = PEAK_AMPLITUDE / peak;
    for v in &mut samples {
        *v = *v * gain + (rng.random_range(-1.0f32..1.0) * 1e-4);
    }
    samples
}

/// Generates the corpus under `out_dir` and returns its manifest (one row
/// per generated file). Fully deterministic: the same spec writes
/// byte-identical audio.
pub fn generate_synthetic_corpus(spec: &CorpusSpec, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut records = Vec::new();
    for s in 0..spec.n_speakers {
        let speaker_id = format!("spk{s:03}");
        let label = if spec.content_classes == 2 && s % 2 == 1 {
            ClassLabel::Im
        } else {
            ClassLabel::Cn
        };
        let sex = if (s / 2) % 2 == 0 { Sex::F } else { Sex::M };
        let age = 55 + ((s * 7) % 25) as u32;
        let mmse = match label {
            ClassLabel::Cn => 26 + (s % 5) as u8,
            ClassLabel::Im => 3 + ((s * 5) % 26) as u8,
        };
        let mut profile_rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, s as u64));
        let profile = SpeakerProfile::sample(&mut profile_rng);

        for session in 0..spec.sessions_per_speaker {
            // Year-apart visits drift the pitch slightly; identity holds.
            let drift_rng_seed = mix_seed(spec.seed, (s as u64) << 20 | session as u64);
            let mut drift_rng = ChaCha8Rng::seed_from_u64(drift_rng_seed);
            let session_drift = drift_rng.random_range(0.97..1.03);

            for utt in 0..spec.utterances_per_speaker {
                let utt_seed = mix_seed(
                    drift_rng_seed,
                    0x5EED_0000_0000_0000 | (utt as u64) << 8 | 1,
                );
                let mut rng = ChaCha8Rng::seed_from_u64(utt_seed);
                let timing = timing_for(label, &mut rng);
                let samples = synthesize_utterance(&profile, &timing, session_drift, &mut rng);

                let file_name = format!("{speaker_id}_s{session:02}_u{utt:02}.wav");
                let path = out_dir.join(&file_name);
                write_wav(&path, &AudioSegment::new(samples, SYNTH_SAMPLE_RATE))?;
                records.push(SpeechRecord {
                    speaker_id: speaker_id.clone(),
                    // Recordings enumerate as pseudo-visits so (speaker,
                    // session) pairs stay unique.
                    session_index: (session * spec.utterances_per_speaker + utt) as u32,
                    label,
                    age: age + session as u32,
                    sex,
                    mmse: Some(mmse),
                    audio_path: path.display().to_string(),
                });
            }
        }
    }
    Manifest::new(records)
}

/// Voiced-segment rate: rising edges of a thresholded 25 ms / 10 ms RMS
/// envelope per second of audio. This is the trivial detector the corpus
/// contract is measured against.
pub fn voiced_segment_rate(samples: &[f32], sample_rate: u32) -> Result<f64> {
    let window = (sample_rate as usize) / 40;
    let hop = (sample_rate as usize) / 100;
    if samples.len() < window {
        return Err(Error::AudioTooShort(format!(
            "need at least {window} samples for one envelope frame, got {}",
            samples.len()
        )));
    }
    let mut envelope = Vec::new();
    let mut start = 0;
    while start + window <= samples.len() {
        let frame = &samples[start..start + window];
        let rms = (frame.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>()
            / window as f64)
            .sqrt();
        envelope.push(rms);
        start += hop;
    }
    let peak = envelope.iter().cloned().fold(0.0f64, f64::max);
    let threshold = 0.2 * peak;
    let mut segments = 0usize;
    let mut voiced = false;
    for &e in &envelope {
        let now = e > threshold;
        if now && !voiced {
            segments += 1;
        }
        voiced = now;
    }
    Ok(segments as f64 / (samples.len() as f64 / sample_rate as f64))
}

/// Welch's t-statistic for a difference in means under unequal variances.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptyInput(
            "welch_t needs at least two values per group".into(),
        ));
    }
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var, n)
    };
    let (ma, va, na) = stats(a);
    let (mb, vb, nb) = stats(b);
    Ok((ma - mb) / (va / na + vb / nb).sqrt().max(1e-12))
}

/// Builds a manifest with the published DementiaBank Pitt structure:
/// 292 speakers (98 CN / 194 IM; sex splits 39:59 and 68:126) whose session
/// counts total 552 samples (242 CN / 310 IM; sex splits 87:155 and
/// 120:190). Ages and MMSE values fall inside the published ranges; audio
/// paths are placeholders.
pub fn dementiabank_structure_manifest() -> Manifest {
    // (prefix, label, sex, speakers, total sessions)
    let groups = [
        ("cn_m", ClassLabel::Cn, Sex::M, 39usize, 87usize),
        ("cn_f", ClassLabel::Cn, Sex::F, 59, 155),
        ("im_m", ClassLabel::Im, Sex::M, 68, 120),
        ("im_f", ClassLabel::Im, Sex::F, 126, 190),
    ];
    let mut records = Vec::new();
    for (prefix, label, sex, speakers, total_sessions) in groups {
        let base = total_sessions / speakers;
        let extra = total_sessions % speakers;
        for i in 0..speakers {
            let sessions = base + usize::from(i < extra);
            let (age0, mmse) = match label {
                ClassLabel::Cn => (46 + ((i * 7) % 33) as u32, 26 + (i % 5) as u8),
                ClassLabel::Im => (49 + ((i * 7) % 37) as u32, 3 + ((i * 5) % 28) as u8),
            };
            for session in 0..sessions {
                let speaker_id = format!("{prefix}{i:03}");
                records.push(SpeechRecord {
                    speaker_id: speaker_id.clone(),
                    session_index: session as u32,
                    label,
                    age: age0 + session as u32,
                    sex,
                    mmse: Some(mmse),
                    audio_path: format!("audio/{speaker_id}_s{session}.wav"),
                });
            }
        }
    }
    Manifest::new(records).expect("the fixed structure satisfies every invariant")
}
