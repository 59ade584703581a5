//! Speaker-verification encoder: a recurrent stack over speaker-config mel
//! frames, projected to a fixed-width unit-norm embedding.

use ndarray::{Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{MelConfigId, MelSpectrogram};
use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::layers::{init_linear, init_lstm_stack, l2_normalize_rows, linear, lstm_stack, time_steps};
use crate::nn::params::Params;

/// Embedding granularity: one utterance, or the mean over a speaker's
/// utterances (Eq. 2 of the framework).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingLevel {
    Utterance,
    Speaker,
}

/// A fixed-width speaker embedding with provenance.
#[derive(Debug, Clone)]
pub struct SpeakerEmbedding {
    pub values: Array1<f32>,
    pub level: EmbeddingLevel,
    pub speaker_id: String,
    pub normalized: bool,
}

impl SpeakerEmbedding {
    pub fn l2_norm(&self) -> f32 {
        self.values.iter().map(|v| v * v).sum::<f32>().sqrt()
    }
}

/// Architecture of the speaker encoder. The published recipe uses 256
/// hidden units; smaller settings train quickly on a single CPU while
/// keeping the 256-wide embedding contract.
#[derive(Debug, Clone)]
pub struct SpeakerEncoderConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub embedding_dim: usize,
    /// Training crop length and inference window length, in frames.
    pub window_frames: usize,
    /// Inference hop between sliding windows (50% overlap by default).
    pub window_hop: usize,
}

impl Default for SpeakerEncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 40,
            hidden: 256,
            layers: 3,
            embedding_dim: 256,
            window_frames: 160,
            window_hop: 80,
        }
    }
}

impl SpeakerEncoderConfig {
    /// A reduced width for desk-scale experiments; embedding width and layer
    /// count stay at the published values.
    pub fn desk() -> Self {
        Self {
            hidden: 64,
            ..Self::default()
        }
    }
}

pub const SIM_W: &str = "sim.w";
pub const SIM_B: &str = "sim.b";
/// Prefix of the recurrent stack — the part frozen during finetuning.
pub const RECURRENT_PREFIX: &str = "rnn.";
/// Prefixes updated during finetune-mode training.
pub const FINETUNE_PREFIXES: [&str; 2] = ["proj.", "sim."];

/// Initializes encoder parameters: recurrent stack `rnn.l{i}.*`, projection
/// `proj.*`, and the similarity scaling pair (`sim.w` = 10, `sim.b` = -5).
pub fn init_speaker_encoder(config: &SpeakerEncoderConfig, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::new();
    init_lstm_stack(&mut params, &mut rng, "rnn", config.input_dim, config.hidden, config.layers);
    init_linear(&mut params, &mut rng, "proj", config.hidden, config.embedding_dim);
    params.insert(SIM_W, ndarray::arr1(&[10.0f32]).into_dyn());
    params.insert(SIM_B, ndarray::arr1(&[-5.0f32]).into_dyn());
    params
}

/// Forward pass over a `[batch, frames, mels]` crop stack: recurrent stack,
/// last hidden state, linear projection, row L2 normalization. Returns the
/// `[batch, embedding_dim]` node.
pub fn forward_batch(
    g: &mut Graph,
    binder: &mut crate::nn::params::Binder,
    config: &SpeakerEncoderConfig,
    batch: &Array3<f32>,
) -> Result<Var> {
    let xs = time_steps(g, batch);
    let hs = lstm_stack(g, binder, "rnn", &xs, config.hidden, config.layers)?;
    let last = *hs.last().expect("non-empty sequence");
    let proj = linear(g, binder, "proj", last)?;
    Ok(l2_normalize_rows(g, proj))
}

/// Embeds one window already shaped `[frames, mels]`.
fn embed_window(
    params: &Params,
    config: &SpeakerEncoderConfig,
    window: &Array2<f32>,
) -> Result<Array1<f32>> {
    let (t, f) = window.dim();
    let batch = window
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((1, t, f))
        .unwrap();
    let mut g = Graph::new();
    let mut b = crate::nn::params::Binder::new(params);
    let out = forward_batch(&mut g, &mut b, config, &batch)?;
    Ok(g.value(out)
        .to_owned()
        .into_shape_with_order(config.embedding_dim)
        .unwrap()
        .into_dimensionality::<ndarray::Ix1>()
        .unwrap())
}

/// Sliding-window starts covering `total` frames with `window`-frame windows
/// and `hop` spacing; a final flush window ends exactly at `total`.
pub fn window_starts(total: usize, window: usize, hop: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0;
    while s + window <= total {
        starts.push(s);
        s += hop;
    }
    if let Some(&last) = starts.last() {
        if last + window < total {
            starts.push(total - window);
        }
    }
    starts
}

/// Embeds a full utterance. Inputs longer than one window are embedded with
/// 50%-overlap sliding windows whose embeddings are averaged and
/// re-normalized.
pub fn embed_utterance(
    mel: &MelSpectrogram,
    params: &Params,
    config: &SpeakerEncoderConfig,
    speaker_id: &str,
) -> Result<SpeakerEmbedding> {
    if mel.config_id != MelConfigId::Speaker {
        return Err(Error::ConfigMismatch(format!(
            "speaker encoder expects SPEAKER mel features, got {}",
            mel.config_id
        )));
    }
    if mel.n_mels() != config.input_dim {
        return Err(Error::ConfigMismatch(format!(
            "expected {} mel channels, got {}",
            config.input_dim,
            mel.n_mels()
        )));
    }
    let t = mel.num_frames();
    if t < config.window_frames {
        return Err(Error::UtteranceTooShort {
            have: t,
            need: config.window_frames,
        });
    }

    let mut sum = Array1::<f32>::zeros(config.embedding_dim);
    let starts = window_starts(t, config.window_frames, config.window_hop);
    for &s in &starts {
        let window = mel
            .values
            .slice(ndarray::s![.., s..s + config.window_frames])
            .t()
            .to_owned(); // [frames, mels]
        sum += &embed_window(params, config, &window)?;
    }
    let mean = sum / starts.len() as f32;
    let norm = mean.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-12);
    Ok(SpeakerEmbedding {
        values: mean / norm,
        level: EmbeddingLevel::Utterance,
        speaker_id: speaker_id.to_string(),
        normalized: true,
    })
}

/// Arithmetic mean of utterance-level embeddings (Eq. 2). The result is NOT
/// re-normalized.
pub fn average_speaker_embedding(embeddings: &[SpeakerEmbedding]) -> Result<SpeakerEmbedding> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::EmptyInput("no utterance embeddings to average".into()))?;
    for e in embeddings {
        if e.speaker_id != first.speaker_id {
            return Err(Error::MixedSpeakers(
                first.speaker_id.clone(),
                e.speaker_id.clone(),
            ));
        }
        if e.level != EmbeddingLevel::Utterance {
            return Err(Error::ConfigMismatch(
                "can only average utterance-level embeddings".into(),
            ));
        }
    }
    let mut sum = Array1::<f32>::zeros(first.values.len());
    for e in embeddings {
        sum += &e.values;
    }
    Ok(SpeakerEmbedding {
        values: sum / embeddings.len() as f32,
        level: EmbeddingLevel::Speaker,
        speaker_id: first.speaker_id.clone(),
        normalized: false,
    })
}

/// Identity-only conditioning: a length-`n_speakers` vector with a single 1.
pub fn one_hot_speaker_embedding(speaker_index: usize, n_speakers: usize) -> Result<Array1<f32>> {
    if speaker_index >= n_speakers {
        return Err(Error::IndexOutOfRange {
            index: speaker_index,
            len: n_speakers,
        });
    }
    let mut v = Array1::zeros(n_speakers);
    v[speaker_index] = 1.0;
    Ok(v)
}
