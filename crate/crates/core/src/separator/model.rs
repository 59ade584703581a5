//! Content-separation autoencoder: a conditioned content encoder with a
//! 32x temporal bottleneck, and a two-stage decoder whose final output is an
//! initial estimate plus a post-network residual.

use ndarray::{Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{MelConfig, MelConfigId, MelSpectrogram};
use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::layers::{
    bilstm_layer, conv1d, init_bilstm_layer, init_conv1d, init_linear, init_lstm_stack,
    instance_norm, linear, lstm_stack,
};
use crate::nn::params::{Binder, Params};

/// Temporal downsampling factor of the content bottleneck.
pub const DOWNSAMPLE: usize = 32;
/// Per-direction width of the content code; the two directions stack to 64.
pub const CODE_DIM: usize = 32;

/// Architecture settings. `Default` matches the reference framework's
/// published sizes; [`SeparatorConfig::desk`] shrinks the free widths for
/// single-core experiments while keeping every contract dimension (64-row
/// codes, 32x downsampling, 80-channel output) intact.
#[derive(Debug, Clone)]
pub struct SeparatorConfig {
    pub n_mels: usize,
    /// Width of the speaker conditioning vector: 256 for learned embeddings
    /// or the speaker count for one-hot conditioning.
    pub conditioning_dim: usize,
    pub enc_channels: usize,
    pub enc_kernel: usize,
    pub enc_conv_layers: usize,
    pub enc_bilstm_layers: usize,
    pub dec_channels: usize,
    pub dec_conv_layers: usize,
    pub dec_hidden: usize,
    pub dec_layers: usize,
    pub post_channels: usize,
    pub post_layers: usize,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            conditioning_dim: 256,
            enc_channels: 512,
            enc_kernel: 5,
            enc_conv_layers: 3,
            enc_bilstm_layers: 2,
            dec_channels: 512,
            dec_conv_layers: 3,
            dec_hidden: 1024,
            dec_layers: 3,
            post_channels: 512,
            post_layers: 5,
        }
    }
}

impl SeparatorConfig {
    /// Reduced widths for desk-scale runs.
    pub fn desk(conditioning_dim: usize) -> Self {
        Self {
            conditioning_dim,
            enc_channels: 48,
            dec_channels: 48,
            dec_hidden: 96,
            post_channels: 48,
            ..Self::default()
        }
    }
}

/// A 64 x K content code: rows 0-31 are the forward-direction half sampled
/// at steps 31, 63, ...; rows 32-63 the backward half sampled at 0, 32, ....
#[derive(Debug, Clone)]
pub struct ContentEmbedding {
    pub values: Array2<f32>,
    pub source_id: String,
}

impl ContentEmbedding {
    pub fn num_cols(&self) -> usize {
        self.values.ncols()
    }
}

/// The decoder's two-stage output; `final_estimate = initial + residual`
/// holds element-exactly.
#[derive(Debug, Clone)]
pub struct ReconstructionPair {
    pub initial: Array2<f32>,
    pub residual: Array2<f32>,
    pub final_estimate: Array2<f32>,
}

/// Frames after right-padding to the next multiple of the downsampling
/// factor.
pub fn padded_len(frames: usize) -> usize {
    frames.div_ceil(DOWNSAMPLE) * DOWNSAMPLE
}

/// Number of content-code columns for `frames` input frames.
pub fn num_code_cols(frames: usize) -> usize {
    frames.div_ceil(DOWNSAMPLE)
}

/// Initializes all separator parameters: `enc.*` (content encoder),
/// `dec.*` (decoder), `post.*` (post-network).
pub fn init_separator(config: &SeparatorConfig, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::new();
    let k = config.enc_kernel;

    let mut in_ch = config.n_mels + config.conditioning_dim;
    for i in 0..config.enc_conv_layers {
        init_conv1d(&mut p, &mut rng, &format!("enc.conv{i}"), in_ch, config.enc_channels, k);
        in_ch = config.enc_channels;
    }
    let mut in_dim = in_ch;
    for i in 0..config.enc_bilstm_layers {
        init_bilstm_layer(&mut p, &mut rng, &format!("enc.bi{i}"), in_dim, CODE_DIM);
        in_dim = 2 * CODE_DIM;
    }

    let mut in_ch = 2 * CODE_DIM + config.conditioning_dim;
    for i in 0..config.dec_conv_layers {
        init_conv1d(&mut p, &mut rng, &format!("dec.conv{i}"), in_ch, config.dec_channels, k);
        in_ch = config.dec_channels;
    }
    init_lstm_stack(&mut p, &mut rng, "dec.rnn", config.dec_channels, config.dec_hidden, config.dec_layers);
    init_linear(&mut p, &mut rng, "dec.proj", config.dec_hidden, config.n_mels);

    let mut in_ch = config.n_mels;
    for i in 0..config.post_layers {
        let out_ch = if i + 1 == config.post_layers {
            config.n_mels
        } else {
            config.post_channels
        };
        init_conv1d(&mut p, &mut rng, &format!("post.conv{i}"), in_ch, out_ch, k);
        in_ch = out_ch;
    }
    p
}

/// Tiles a `[b, d]` conditioning node along a new trailing time axis of
/// length `t`.
fn tile_time(g: &mut Graph, v: Var, t: usize) -> Var {
    let shape = g.value(v).shape().to_vec();
    let col = g.reshape(v, &[shape[0], shape[1], 1]);
    g.concat(&vec![col; t], 2)
}

/// Splits `x [b, c, t]` into `t` nodes of `[b, c]`.
fn unstack_time(g: &mut Graph, x: Var) -> Vec<Var> {
    let shape = g.value(x).shape().to_vec();
    let (b, c, t) = (shape[0], shape[1], shape[2]);
    (0..t)
        .map(|ti| {
            let s = g.slice_axis(x, 2, ti, 1);
            g.reshape(s, &[b, c])
        })
        .collect()
}

/// Stacks `t` nodes of `[b, c]` into `[b, c, t]`.
fn stack_channels_time(g: &mut Graph, xs: &[Var]) -> Var {
    let shape = g.value(xs[0]).shape().to_vec();
    let (b, c) = (shape[0], shape[1]);
    let cols: Vec<Var> = xs.iter().map(|&x| g.reshape(x, &[b, c, 1])).collect();
    g.concat(&cols, 2)
}

/// Content encoder on graph nodes. `mel` is `[b, n_mels, t]` with `t` a
/// multiple of 32; `cond` is `[b, conditioning_dim]`. Returns the K = t/32
/// code columns, each `[b, 64]` (forward half then backward half).
pub fn encode_graph(
    g: &mut Graph,
    binder: &mut Binder,
    config: &SeparatorConfig,
    mel: Var,
    cond: Var,
) -> Result<Vec<Var>> {
    let t = g.value(mel).shape()[2];
    assert_eq!(t % DOWNSAMPLE, 0, "encoder input must be padded to 32");
    let pad = config.enc_kernel / 2;

    let cond_tiled = tile_time(g, cond, t);
    let mut x = g.concat(&[mel, cond_tiled], 1);
    for i in 0..config.enc_conv_layers {
        let y = conv1d(g, binder, &format!("enc.conv{i}"), x, pad, 1)?;
        let n = instance_norm(g, y);
        x = g.relu(n);
    }

    let mut seq = unstack_time(g, x);
    let mut streams = bilstm_layer(g, binder, "enc.bi0", &seq, CODE_DIM)?;
    for i in 1..config.enc_bilstm_layers {
        seq = streams
            .0
            .iter()
            .zip(&streams.1)
            .map(|(&f, &b)| g.concat(&[f, b], 1))
            .collect();
        streams = bilstm_layer(g, binder, &format!("enc.bi{i}"), &seq, CODE_DIM)?;
    }
    let (fwd, bwd) = streams;

    // Downsample: forward codes at the ends of each 32-step span, backward
    // codes at the starts.
    let k = t / DOWNSAMPLE;
    let cols = (0..k)
        .map(|ki| {
            let f = fwd[ki * DOWNSAMPLE + DOWNSAMPLE - 1];
            let b = bwd[ki * DOWNSAMPLE];
            g.concat(&[f, b], 1)
        })
        .collect();
    Ok(cols)
}

/// Decoder on graph nodes: 32x copy-upsampling of the code columns,
/// per-frame concatenation with the conditioning vector, conv blocks, the
/// recurrent stack, a linear projection (initial estimate), and the
/// post-network residual. Returns `(initial, residual, final)`, each
/// `[b, n_mels, 32 K]`.
pub fn decode_graph(
    g: &mut Graph,
    binder: &mut Binder,
    config: &SeparatorConfig,
    code_cols: &[Var],
    cond: Var,
) -> Result<(Var, Var, Var)> {
    assert!(!code_cols.is_empty(), "decoder needs at least one code column");
    let pad = config.enc_kernel / 2;
    let shape = g.value(code_cols[0]).shape().to_vec();
    let b = shape[0];

    // Upsample by repetition and append conditioning per frame.
    let frame_inputs: Vec<Var> = code_cols
        .iter()
        .flat_map(|&col| {
            let with_cond = g.concat(&[col, cond], 1); // [b, 64 + d]
            std::iter::repeat_n(with_cond, DOWNSAMPLE)
        })
        .collect();
    let mut x = stack_channels_time(g, &frame_inputs); // [b, 64 + d, t]

    for i in 0..config.dec_conv_layers {
        let y = conv1d(g, binder, &format!("dec.conv{i}"), x, pad, 1)?;
        let n = instance_norm(g, y);
        x = g.relu(n);
    }

    let seq = unstack_time(g, x);
    let hs = lstm_stack(g, binder, "dec.rnn", &seq, config.dec_hidden, config.dec_layers)?;
    let frames: Vec<Var> = hs
        .iter()
        .map(|&h| linear(g, binder, "dec.proj", h))
        .collect::<Result<_>>()?;
    let initial = stack_channels_time(g, &frames); // [b, n_mels, t]
    debug_assert_eq!(g.value(initial).shape()[0], b);

    let mut r = initial;
    for i in 0..config.post_layers {
        r = conv1d(g, binder, &format!("post.conv{i}"), r, pad, 1)?;
        if i + 1 != config.post_layers {
            let n = instance_norm(g, r);
            r = g.tanh(n);
        }
    }
    let residual = r;
    let final_estimate = g.add(initial, residual);
    Ok((initial, residual, final_estimate))
}

fn check_conditioning(config: &SeparatorConfig, cond: &Array1<f32>) -> Result<()> {
    if cond.len() != config.conditioning_dim {
        return Err(Error::ConfigMismatch(format!(
            "conditioning vector has width {}, separator expects {}",
            cond.len(),
            config.conditioning_dim
        )));
    }
    Ok(())
}

/// Right-pads content-config mel values to a multiple of 32 frames using the
/// config's log floor, returning the padded `[1, n_mels, t']` batch.
fn padded_batch(mel: &MelSpectrogram, n_mels: usize) -> Result<Array3<f32>> {
    if mel.config_id != MelConfigId::Content {
        return Err(Error::ConfigMismatch(format!(
            "content encoder expects CONTENT mel features, got {}",
            mel.config_id
        )));
    }
    if mel.n_mels() != n_mels {
        return Err(Error::ConfigMismatch(format!(
            "expected {n_mels} mel channels, got {}",
            mel.n_mels()
        )));
    }
    let t = mel.num_frames();
    if t == 0 {
        return Err(Error::EmptyAudio);
    }
    let tp = padded_len(t);
    let floor = MelConfig::content().log_floor();
    let mut out = Array3::from_elem((1, n_mels, tp), floor);
    for c in 0..n_mels {
        for ti in 0..t {
            out[[0, c, ti]] = mel.values[[c, ti]];
        }
    }
    Ok(out)
}

/// Encodes one utterance into its 64 x K content embedding (inference
/// entry point; deterministic).
pub fn content_encode(
    mel: &MelSpectrogram,
    speaker_emb: &Array1<f32>,
    params: &Params,
    config: &SeparatorConfig,
) -> Result<ContentEmbedding> {
    check_conditioning(config, speaker_emb)?;
    let batch = padded_batch(mel, config.n_mels)?;
    let mut g = Graph::new();
    let mut binder = Binder::new(params);
    let mel_v = g.input(batch.into_dyn());
    let cond = g.input(
        speaker_emb
            .to_owned()
            .into_shape_with_order((1, config.conditioning_dim))
            .unwrap()
            .into_dyn(),
    );
    let cols = encode_graph(&mut g, &mut binder, config, mel_v, cond)?;
    let k = cols.len();
    let mut values = Array2::zeros((2 * CODE_DIM, k));
    for (ki, col) in cols.iter().enumerate() {
        let v = g.value(*col);
        for r in 0..2 * CODE_DIM {
            values[[r, ki]] = v[[0, r]];
        }
    }
    Ok(ContentEmbedding {
        values,
        source_id: mel.source_id.clone(),
    })
}

/// Reconstructs mel frames from a content embedding and a conditioning
/// vector (inference entry point).
pub fn decode(
    content: &ContentEmbedding,
    speaker_emb: &Array1<f32>,
    params: &Params,
    config: &SeparatorConfig,
) -> Result<ReconstructionPair> {
    check_conditioning(config, speaker_emb)?;
    if content.values.nrows() != 2 * CODE_DIM {
        return Err(Error::ShapeError(format!(
            "content embedding must have {} rows, got {}",
            2 * CODE_DIM,
            content.values.nrows()
        )));
    }
    if content.num_cols() == 0 {
        return Err(Error::EmptyEmbedding);
    }
    let mut g = Graph::new();
    let mut binder = Binder::new(params);
    let cond = g.input(
        speaker_emb
            .to_owned()
            .into_shape_with_order((1, config.conditioning_dim))
            .unwrap()
            .into_dyn(),
    );
    let cols: Vec<Var> = (0..content.num_cols())
        .map(|ki| {
            let col = content
                .values
                .column(ki)
                .to_owned()
                .into_shape_with_order((1, 2 * CODE_DIM))
                .unwrap();
            g.input(col.into_dyn())
        })
        .collect();
    let (initial, residual, final_estimate) = decode_graph(&mut g, &mut binder, config, &cols, cond)?;
    let take = |v: Var, g: &Graph| {
        let a = g.value(v);
        let (c, t) = (a.shape()[1], a.shape()[2]);
        Array2::from_shape_fn((c, t), |(ci, ti)| a[[0, ci, ti]])
    };
    Ok(ReconstructionPair {
        initial: take(initial, &g),
        residual: take(residual, &g),
        final_estimate: take(final_estimate, &g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(cond_dim: usize) -> SeparatorConfig {
        SeparatorConfig {
            n_mels: 80,
            conditioning_dim: cond_dim,
            enc_channels: 8,
            enc_kernel: 5,
            enc_conv_layers: 2,
            enc_bilstm_layers: 2,
            dec_channels: 8,
            dec_conv_layers: 2,
            dec_hidden: 12,
            dec_layers: 2,
            post_channels: 8,
            post_layers: 3,
        }
    }

    fn mel_of(frames: usize, seed: u64) -> MelSpectrogram {
        let mut state = seed;
        let values = Array2::from_shape_fn((80, frames), |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(99);
            ((state >> 33) as f32 / (1u64 << 31) as f32) - 1.0
        });
        MelSpectrogram {
            values,
            config_id: MelConfigId::Content,
            source_id: format!("m{seed}"),
        }
    }

    fn cond_of(dim: usize) -> Array1<f32> {
        Array1::from_shape_fn(dim, |i| ((i as f32) * 0.37).sin() * 0.5)
    }

    #[test]
    fn content_shapes_follow_ceil_t_over_32() {
        let config = tiny_config(16);
        let params = init_separator(&config, 1);
        let cond = cond_of(16);
        for (t, k) in [(96, 3), (64, 2), (100, 4), (32, 1), (33, 2)] {
            let c = content_encode(&mel_of(t, t as u64), &cond, &params, &config).unwrap();
            assert_eq!(c.values.shape(), &[64, k], "T={t}");
        }
    }

    #[test]
    fn decode_length_is_32_times_cols_and_additivity_holds() {
        let config = tiny_config(16);
        let params = init_separator(&config, 2);
        let cond = cond_of(16);
        let content = content_encode(&mel_of(96, 5), &cond, &params, &config).unwrap();
        let pair = decode(&content, &cond, &params, &config).unwrap();
        assert_eq!(pair.initial.shape(), &[80, 96]);
        assert_eq!(pair.final_estimate.shape(), &[80, 96]);
        // bit-exact additivity
        for ((f, i), r) in pair
            .final_estimate
            .iter()
            .zip(pair.initial.iter())
            .zip(pair.residual.iter())
        {
            assert_eq!(*f, i + r);
        }
    }

    #[test]
    fn zero_post_network_forces_final_equal_initial() {
        let config = tiny_config(8);
        let mut params = init_separator(&config, 3);
        let zero_names: Vec<String> = params
            .names()
            .filter(|n| n.starts_with("post."))
            .map(String::from)
            .collect();
        for n in zero_names {
            params.get_mut(&n).unwrap().fill(0.0);
        }
        let cond = cond_of(8);
        let content = content_encode(&mel_of(64, 9), &cond, &params, &config).unwrap();
        let pair = decode(&content, &cond, &params, &config).unwrap();
        assert_eq!(pair.initial, pair.final_estimate);
        assert!(pair.residual.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conditioning_width_mismatch_is_rejected() {
        let config = tiny_config(16);
        let params = init_separator(&config, 4);
        let bad = cond_of(12);
        assert!(matches!(
            content_encode(&mel_of(64, 1), &bad, &params, &config),
            Err(Error::ConfigMismatch(_))
        ));
        let content = ContentEmbedding {
            values: Array2::zeros((64, 2)),
            source_id: "x".into(),
        };
        assert!(matches!(
            decode(&content, &bad, &params, &config),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn wrong_mel_preset_is_rejected() {
        let config = tiny_config(16);
        let params = init_separator(&config, 5);
        let mut mel = mel_of(64, 2);
        mel.config_id = MelConfigId::Speaker;
        assert!(matches!(
            content_encode(&mel, &cond_of(16), &params, &config),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn encoding_is_deterministic() {
        let config = tiny_config(16);
        let params = init_separator(&config, 6);
        let cond = cond_of(16);
        let mel = mel_of(100, 3);
        let a = content_encode(&mel, &cond, &params, &config).unwrap();
        let b = content_encode(&mel, &cond, &params, &config).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn forward_half_uses_span_ends_and_backward_half_span_starts() {
        // With no conv layers (no instance-norm statistics shared across
        // time) and a single bidirectional layer (deeper layers feed on the
        // opposite direction's stream, which has seen the whole sequence),
        // the two streams are exactly causal/anticausal, which pins down
        // the sampling phases:
        //  - editing frame 40 must leave column 0's forward half (sampled at
        //    step 31) bit-identical while changing its backward half
        //    (sampled at step 0, which has consumed the whole future);
        //  - editing frame 20 must leave column 1's backward half (sampled
        //    at step 32) bit-identical while changing its forward half
        //    (sampled at step 63).
        let mut config = tiny_config(8);
        config.enc_conv_layers = 0;
        config.enc_bilstm_layers = 1;
        let params = init_separator(&config, 7);
        let cond = cond_of(8);
        let base = mel_of(64, 11);

        let deltas = |frame: usize, col: usize| {
            let mut edited = base.clone();
            for c in 0..80 {
                edited.values[[c, frame]] += 2.0;
            }
            let ca = content_encode(&base, &cond, &params, &config).unwrap();
            let cb = content_encode(&edited, &cond, &params, &config).unwrap();
            let fwd: f32 = (0..32)
                .map(|r| (ca.values[[r, col]] - cb.values[[r, col]]).abs())
                .sum();
            let bwd: f32 = (32..64)
                .map(|r| (ca.values[[r, col]] - cb.values[[r, col]]).abs())
                .sum();
            (fwd, bwd)
        };

        let (fwd0, bwd0) = deltas(40, 0);
        assert_eq!(fwd0, 0.0, "forward half of column 0 saw frame 40");
        assert!(bwd0 > 1e-6, "backward half of column 0 ignored frame 40");

        let (fwd1, bwd1) = deltas(20, 1);
        assert!(fwd1 > 1e-6, "forward half of column 1 ignored frame 20");
        assert_eq!(bwd1, 0.0, "backward half of column 1 saw frame 20");
    }

    #[test]
    fn conditioning_vector_changes_the_code() {
        let config = tiny_config(8);
        let params = init_separator(&config, 8);
        let mel = mel_of(64, 12);
        let c1 = content_encode(&mel, &cond_of(8), &params, &config).unwrap();
        let c2 = content_encode(&mel, &Array1::zeros(8), &params, &config).unwrap();
        let delta: f32 = (&c1.values - &c2.values).iter().map(|v| v.abs()).sum();
        assert!(delta > 1e-6, "conditioning had no effect on the encoder");
    }
}
