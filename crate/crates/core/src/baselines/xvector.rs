//! x-vector baseline: a five-layer time-delay stack over speaker-config mel
//! frames (valid framing, no padding), statistics pooling, and a segment
//! layer whose pre-activation output is the fixed 512-dim embedding.
//! Trained with cross-entropy over speaker identities.

use ndarray::{Array1, Array3};
use rand::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{MelConfigId, MelSpectrogram};
use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::graph::{Graph, Var};
use crate::nn::layers::{
    conv1d, cross_entropy_mean, init_conv1d, init_linear, instance_norm, linear, one_hot,
};
use crate::nn::params::{Binder, Params};

use super::pooling::statistics_pooling_graph;

/// Fixed output width of the x-vector baseline.
pub const XVECTOR_DIM: usize = 512;

/// Time-delay contexts as (kernel, dilation) pairs: +-2, +-2 dilated 2,
/// +-3 dilated 3, then two frame-wise layers.
pub const TDNN_CONTEXTS: [(usize, usize); 5] = [(5, 1), (3, 2), (3, 3), (1, 1), (1, 1)];

/// Frames consumed by the valid-framed stack: sum of (kernel-1) * dilation.
pub const RECEPTIVE_FIELD: usize = 14;

#[derive(Debug, Clone)]
pub struct XVector {
    pub values: Array1<f32>,
    pub source_id: String,
}

#[derive(Debug, Clone)]
pub struct XVectorConfig {
    pub input_dim: usize,
    /// Width of the first four time-delay layers.
    pub tdnn_channels: usize,
    /// Width of the final time-delay layer; statistics pooling doubles it.
    pub final_channels: usize,
}

impl Default for XVectorConfig {
    fn default() -> Self {
        Self {
            input_dim: 40,
            tdnn_channels: 512,
            final_channels: 1536,
        }
    }
}

impl XVectorConfig {
    /// Reduced widths for desk-scale runs; the output stays 512.
    pub fn desk() -> Self {
        Self {
            tdnn_channels: 24,
            final_channels: 32,
            ..Self::default()
        }
    }

    /// Minimum input frames: the receptive field plus the two pooled frames
    /// statistics pooling needs.
    pub fn min_input_frames(&self) -> usize {
        RECEPTIVE_FIELD + 2
    }
}

/// Initializes x-vector parameters: `tdnn{i}.*` and the segment layer
/// `seg.*`. The training-only classifier head is added by the trainer.
pub fn init_xvector(config: &XVectorConfig, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::new();
    let mut in_ch = config.input_dim;
    for (i, (k, _)) in TDNN_CONTEXTS.iter().enumerate() {
        let out_ch = if i + 1 == TDNN_CONTEXTS.len() {
            config.final_channels
        } else {
            config.tdnn_channels
        };
        init_conv1d(&mut p, &mut rng, &format!("tdnn{i}"), in_ch, out_ch, *k);
        in_ch = out_ch;
    }
    init_linear(&mut p, &mut rng, "seg", 2 * config.final_channels, XVECTOR_DIM);
    p
}

/// Forward pass on a `[B, F, T]` channel-first batch to `[B, 512]`.
pub fn forward_batch_xvector(
    g: &mut Graph,
    binder: &mut Binder,
    config: &XVectorConfig,
    batch: &Array3<f32>,
) -> Result<Var> {
    let t_in = batch.shape()[2];
    if t_in < config.min_input_frames() {
        return Err(Error::AudioTooShort(format!(
            "x-vector needs >= {} frames, got {t_in}",
            config.min_input_frames()
        )));
    }
    let mut x = g.input(batch.to_owned().into_dyn());
    for (i, (_, d)) in TDNN_CONTEXTS.iter().enumerate() {
        let y = conv1d(g, binder, &format!("tdnn{i}"), x, 0, *d)?;
        let r = g.relu(y);
        x = instance_norm(g, r);
    }
    let shape = g.value(x).shape().to_vec();
    let (b, c, t) = (shape[0], shape[1], shape[2]);
    let hs: Vec<Var> = (0..t)
        .map(|ti| {
            let s = g.slice_axis(x, 2, ti, 1);
            g.reshape(s, &[b, c])
        })
        .collect();
    let stats = statistics_pooling_graph(g, &hs)?;
    linear(g, binder, "seg", stats)
}

/// Extracts the x-vector for one utterance of speaker-config mel frames.
pub fn x_vector(mel: &MelSpectrogram, params: &Params, config: &XVectorConfig) -> Result<XVector> {
    if mel.config_id != MelConfigId::Speaker {
        return Err(Error::ConfigMismatch(format!(
            "x-vector expects SPEAKER mel features, got {}",
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
    if t < config.min_input_frames() {
        return Err(Error::AudioTooShort(format!(
            "x-vector needs >= {} frames, got {t}",
            config.min_input_frames()
        )));
    }
    let mut batch = Array3::zeros((1, config.input_dim, t));
    for c in 0..config.input_dim {
        for ti in 0..t {
            batch[[0, c, ti]] = mel.values[[c, ti]];
        }
    }
    let mut g = Graph::new();
    let mut binder = Binder::new(params);
    let emb = forward_batch_xvector(&mut g, &mut binder, config, &batch)?;
    let v = g.value(emb);
    Ok(XVector {
        values: Array1::from_shape_fn(XVECTOR_DIM, |d| v[[0, d]]),
        source_id: mel.source_id.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct XVectorTrainConfig {
    pub arch: XVectorConfig,
    pub batch_size: usize,
    pub crop_frames: usize,
    pub steps: usize,
    pub lr: f32,
    pub seed: u64,
}

impl Default for XVectorTrainConfig {
    fn default() -> Self {
        Self {
            arch: XVectorConfig::default(),
            batch_size: 8,
            crop_frames: 50,
            steps: 500,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct XVectorTrainOutcome {
    pub params: Params,
    pub losses: Vec<f32>,
}

/// Trains the x-vector extractor with cross-entropy over speaker identity.
/// The classifier head lives under `head.*` and is ignored at inference.
pub fn train_xvector(
    corpus: &[(String, Vec<MelSpectrogram>)],
    config: &XVectorTrainConfig,
    init_params: Params,
) -> Result<XVectorTrainOutcome> {
    if config.crop_frames < config.arch.min_input_frames() {
        return Err(Error::ConfigError(format!(
            "crop_frames must be >= {}",
            config.arch.min_input_frames()
        )));
    }
    let n_speakers = corpus.len();
    if n_speakers < 2 {
        return Err(Error::DegenerateBatch(
            "speaker classification needs >= 2 speakers".into(),
        ));
    }
    // (speaker index, utterance index) pairs long enough to crop.
    let mut pool: Vec<(usize, usize)> = Vec::new();
    for (s, (_, utts)) in corpus.iter().enumerate() {
        for (u, mel) in utts.iter().enumerate() {
            if mel.num_frames() >= config.crop_frames {
                pool.push((s, u));
            }
        }
    }
    let distinct: std::collections::BTreeSet<usize> = pool.iter().map(|(s, _)| *s).collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateBatch(format!(
            "need croppable utterances from >= 2 speakers, found {}",
            distinct.len()
        )));
    }

    let mut params = init_params;
    if !params.contains("head.w") {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e3779b97f4a7c15);
        init_linear(&mut params, &mut rng, "head", XVECTOR_DIM, n_speakers);
    }

    let dim = config.arch.input_dim;
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let b = config.batch_size;
        let mut batch = Array3::zeros((b, dim, config.crop_frames));
        let mut labels = Vec::with_capacity(b);
        for bi in 0..b {
            let (s, u) = pool[rng.random_range(0..pool.len())];
            let mel = &corpus[s].1[u];
            let max_off = mel.num_frames() - config.crop_frames;
            let off = if max_off == 0 { 0 } else { rng.random_range(0..=max_off) };
            for c in 0..dim {
                for t in 0..config.crop_frames {
                    batch[[bi, c, t]] = mel.values[[c, off + t]];
                }
            }
            labels.push(s);
        }
        let mut g = Graph::new();
        let mut binder = Binder::new(&params);
        let emb = forward_batch_xvector(&mut g, &mut binder, &config.arch, &batch)?;
        let logits = linear(&mut g, &mut binder, "head", emb)?;
        let targets = g.input(one_hot(&labels, n_speakers).into_dyn());
        let loss = cross_entropy_mean(&mut g, logits, targets);
        losses.push(g.scalar(loss));
        g.backward(loss);
        let grads = binder.grads(&g);
        opt.step(&mut params, &grads);
    }
    Ok(XVectorTrainOutcome { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn tiny_config() -> XVectorConfig {
        XVectorConfig {
            input_dim: 40,
            tdnn_channels: 6,
            final_channels: 8,
        }
    }

    fn speaker_mel(frames: usize, seed: u64) -> MelSpectrogram {
        let mut state = seed.wrapping_add(17);
        let values = Array2::from_shape_fn((40, frames), |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(7);
            ((state >> 33) as f32 / (1u64 << 31) as f32) - 1.0
        });
        MelSpectrogram {
            values,
            config_id: MelConfigId::Speaker,
            source_id: format!("x{seed}"),
        }
    }

    #[test]
    fn output_width_is_512_for_any_valid_length() {
        let config = tiny_config();
        let params = init_xvector(&config, 1);
        for t in [16, 40, 120] {
            let x = x_vector(&speaker_mel(t, t as u64), &params, &config).unwrap();
            assert_eq!(x.values.len(), 512);
        }
    }

    #[test]
    fn too_short_sequence_is_rejected() {
        let config = tiny_config();
        let params = init_xvector(&config, 2);
        assert!(matches!(
            x_vector(&speaker_mel(15, 3), &params, &config),
            Err(Error::AudioTooShort(_))
        ));
    }

    #[test]
    fn extraction_is_deterministic() {
        let config = tiny_config();
        let params = init_xvector(&config, 3);
        let mel = speaker_mel(30, 8);
        let a = x_vector(&mel, &params, &config).unwrap();
        let b = x_vector(&mel, &params, &config).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn wrong_mel_preset_is_rejected() {
        let config = tiny_config();
        let params = init_xvector(&config, 4);
        let mut mel = speaker_mel(30, 9);
        mel.config_id = MelConfigId::Content;
        assert!(matches!(
            x_vector(&mel, &params, &config),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn dilated_valid_framing_shrinks_length_as_expected() {
        // kernel 3, dilation 2 on a length-7 input leaves 7 - (3-1)*2 = 3.
        let mut g = Graph::new();
        let x = g.input(Array3::<f32>::zeros((1, 2, 7)).into_dyn());
        let w = g.input(Array3::<f32>::zeros((4, 2, 3)).into_dyn());
        let y = g.conv1d(x, w, None, 0, 2);
        assert_eq!(g.value(y).shape(), &[1, 4, 3]);
    }

    #[test]
    fn single_layer_matches_hand_unrolled_dilated_convolution() {
        let mut seed = 99u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(11);
            ((seed >> 33) as f32 / (1u64 << 31) as f32) - 1.0
        };
        let x = Array3::from_shape_fn((1, 2, 7), |_| next());
        let w = Array3::from_shape_fn((1, 2, 3), |_| next());
        let bias = next();

        let mut expected = [0.0f32; 3];
        for (t, e) in expected.iter_mut().enumerate() {
            let mut acc = bias;
            for c in 0..2 {
                for j in 0..3 {
                    acc += w[[0, c, j]] * x[[0, c, t + 2 * j]];
                }
            }
            *e = acc;
        }

        let mut g = Graph::new();
        let xv = g.input(x.into_dyn());
        let wv = g.input(w.into_dyn());
        let bv = g.input(ndarray::arr1(&[bias]).into_dyn());
        let y = g.conv1d(xv, wv, Some(bv), 0, 2);
        for (t, e) in expected.iter().enumerate() {
            assert!((g.value(y)[[0, 0, t]] - e).abs() < 1e-5);
        }
    }

    #[test]
    fn training_reduces_speaker_cross_entropy() {
        let corpus: Vec<(String, Vec<MelSpectrogram>)> = (0..3)
            .map(|s| {
                let utts = (0..3)
                    .map(|u| {
                        let mut mel = speaker_mel(40, (s * 10 + u) as u64);
                        for c in 0..40 {
                            for t in 0..40 {
                                mel.values[[c, t]] +=
                                    ((s as f32 + 1.0) * (c as f32 + 1.0) * 0.17).sin() * 2.0;
                            }
                        }
                        mel
                    })
                    .collect();
                (format!("spk{s}"), utts)
            })
            .collect();
        let config = XVectorTrainConfig {
            arch: tiny_config(),
            batch_size: 6,
            crop_frames: 24,
            steps: 40,
            lr: 3e-3,
            seed: 5,
        };
        let init = init_xvector(&config.arch, 6);
        let out = train_xvector(&corpus, &config, init).unwrap();
        let first: f32 = out.losses[..5].iter().sum::<f32>() / 5.0;
        let last: f32 = out.losses[out.losses.len() - 5..].iter().sum::<f32>() / 5.0;
        assert!(last < first, "cross-entropy did not decrease: {first} -> {last}");
        assert!(out.params.contains("head.w"));
    }
}
