//! d-vector baseline: a 3-layer LSTM over speaker-config mel frames with
//! attentive pooling and a projection to a fixed 256-dim embedding, trained
//! with the GE2E objective on grouped utterances.

use ndarray::{Array1, Array3};
use rand::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{sample_partial_frames, MelConfigId, MelSpectrogram, ShortUtterancePolicy};
use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::graph::{Graph, Var};
use crate::nn::layers::{
    init_linear, init_lstm_stack, l2_normalize_rows, linear, lstm_stack, time_steps,
};
use crate::nn::params::{Binder, Params};
use crate::speaker::ge2e_loss_graph;

use super::pooling::attentive_pooling_graph;

/// Fixed output width of the d-vector baseline.
pub const DVECTOR_DIM: usize = 256;

#[derive(Debug, Clone)]
pub struct DVector {
    pub values: Array1<f32>,
    pub source_id: String,
}

#[derive(Debug, Clone)]
pub struct DVectorConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for DVectorConfig {
    fn default() -> Self {
        Self {
            input_dim: 40,
            hidden: 256,
            layers: 3,
        }
    }
}

impl DVectorConfig {
    /// Reduced recurrent width for desk-scale runs; the output stays 256.
    pub fn desk() -> Self {
        Self { hidden: 64, ..Self::default() }
    }
}

/// Initializes d-vector parameters: `rnn.*` (LSTM stack), `att.*`
/// (attention scoring), `proj.*` (projection to 256), and the GE2E
/// similarity pair `sim.w` / `sim.b`.
pub fn init_dvector(config: &DVectorConfig, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Params::new();
    init_lstm_stack(&mut p, &mut rng, "rnn", config.input_dim, config.hidden, config.layers);
    init_linear(&mut p, &mut rng, "att", config.hidden, 1);
    init_linear(&mut p, &mut rng, "proj", config.hidden, DVECTOR_DIM);
    p.insert("sim.w", ndarray::arr1(&[10.0f32]).into_dyn());
    p.insert("sim.b", ndarray::arr1(&[-5.0f32]).into_dyn());
    p
}

/// Forward pass on a `[B, T, F]` frame batch to `[B, 256]` unit rows.
pub fn forward_batch_dvector(
    g: &mut Graph,
    binder: &mut Binder,
    config: &DVectorConfig,
    batch: &Array3<f32>,
) -> Result<Var> {
    let steps = time_steps(g, batch);
    let hs = lstm_stack(g, binder, "rnn", &steps, config.hidden, config.layers)?;
    let pooled = attentive_pooling_graph(g, binder, "att", &hs)?;
    let projected = linear(g, binder, "proj", pooled)?;
    Ok(l2_normalize_rows(g, projected))
}

/// Extracts the d-vector for one utterance of speaker-config mel frames.
pub fn d_vector(mel: &MelSpectrogram, params: &Params, config: &DVectorConfig) -> Result<DVector> {
    if mel.config_id != MelConfigId::Speaker {
        return Err(Error::ConfigMismatch(format!(
            "d-vector expects SPEAKER mel features, got {}",
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
    if t == 0 {
        return Err(Error::EmptyAudio);
    }
    let mut batch = Array3::zeros((1, t, config.input_dim));
    for c in 0..config.input_dim {
        for ti in 0..t {
            batch[[0, ti, c]] = mel.values[[c, ti]];
        }
    }
    let mut g = Graph::new();
    let mut binder = Binder::new(params);
    let emb = forward_batch_dvector(&mut g, &mut binder, config, &batch)?;
    let v = g.value(emb);
    Ok(DVector {
        values: Array1::from_shape_fn(DVECTOR_DIM, |d| v[[0, d]]),
        source_id: mel.source_id.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct DVectorTrainConfig {
    pub arch: DVectorConfig,
    pub speakers_per_batch: usize,
    pub utterances_per_speaker: usize,
    pub crop_frames: usize,
    pub steps: usize,
    pub lr: f32,
    pub seed: u64,
}

impl Default for DVectorTrainConfig {
    fn default() -> Self {
        Self {
            arch: DVectorConfig::default(),
            speakers_per_batch: 8,
            utterances_per_speaker: 4,
            crop_frames: 160,
            steps: 500,
            lr: 5e-3,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct DVectorTrainOutcome {
    pub params: Params,
    pub losses: Vec<f32>,
}

/// Trains the d-vector extractor with the GE2E objective on grouped
/// utterances (speaker-config mels).
pub fn train_dvector(
    corpus: &[(String, Vec<MelSpectrogram>)],
    config: &DVectorTrainConfig,
    init_params: Params,
) -> Result<DVectorTrainOutcome> {
    let usable: Vec<&(String, Vec<MelSpectrogram>)> = corpus
        .iter()
        .filter(|(_, utts)| {
            utts.iter()
                .map(|m| m.num_frames().saturating_sub(config.crop_frames - 1))
                .sum::<usize>()
                >= 2
        })
        .collect();
    if usable.len() < 2 || config.utterances_per_speaker < 2 {
        return Err(Error::DegenerateBatch(
            "GE2E training needs >= 2 speakers and >= 2 utterances per speaker".into(),
        ));
    }
    let mut params = init_params;
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let s = config.speakers_per_batch.min(usable.len());
        let mut order: Vec<usize> = (0..usable.len()).collect();
        order.shuffle(&mut rng);
        let chosen: Vec<(String, Vec<&MelSpectrogram>)> = order[..s]
            .iter()
            .map(|&idx| {
                let (key, utts) = usable[idx];
                (key.clone(), utts.iter().collect())
            })
            .collect();
        let batch = sample_partial_frames(
            &chosen,
            config.utterances_per_speaker,
            config.crop_frames,
            ShortUtterancePolicy::Skip,
            rng.random(),
        )?;
        let mut g = Graph::new();
        let mut binder = Binder::new(&params);
        let emb = forward_batch_dvector(&mut g, &mut binder, &config.arch, &batch.data)?;
        let w = binder.get(&mut g, "sim.w")?;
        let b = binder.get(&mut g, "sim.b")?;
        let loss = ge2e_loss_graph(&mut g, emb, s, config.utterances_per_speaker, w, b)?;
        losses.push(g.scalar(loss));
        g.backward(loss);
        let grads = binder.grads(&g);
        opt.step(&mut params, &grads);
        params.get_mut("sim.w")?.mapv_inplace(|v| v.max(1e-4));
    }
    Ok(DVectorTrainOutcome { params, losses })
}
