//! GE2E training loop for the speaker encoder, covering both full training
//! and the finetune protocol that updates only the final projection and the
//! similarity scaling pair.

use rand::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{sample_partial_frames, MelSpectrogram, ShortUtterancePolicy};
use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::graph::Graph;
use crate::nn::params::{Binder, Params};
use crate::speaker::encoder::{forward_batch, SpeakerEncoderConfig, FINETUNE_PREFIXES, SIM_W};
use crate::speaker::ge2e::ge2e_loss_graph;

/// Which parameters a training run may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Everything trains.
    Full,
    /// Only the final projection and the similarity pair (w, b) train; the
    /// recurrent stack stays bit-identical.
    Finetune,
}

#[derive(Debug, Clone)]
pub struct SpeakerTrainConfig {
    pub arch: SpeakerEncoderConfig,
    pub speakers_per_batch: usize,
    pub utterances_per_speaker: usize,
    pub steps: usize,
    pub lr: f32,
    pub seed: u64,
    /// Stop once the smoothed loss falls below `factor * initial loss`.
    pub early_stop_factor: Option<f32>,
    /// Window for the smoothed (moving-average) loss used in logs and early
    /// stopping.
    pub smooth_window: usize,
}

impl Default for SpeakerTrainConfig {
    fn default() -> Self {
        Self {
            arch: SpeakerEncoderConfig::default(),
            speakers_per_batch: 8,
            utterances_per_speaker: 4,
            steps: 500,
            lr: 5e-3,
            seed: 0,
            early_stop_factor: None,
            smooth_window: 20,
        }
    }
}

/// Result of a training run: final parameters plus the per-step loss trace.
#[derive(Debug, Clone)]
pub struct SpeakerTrainOutcome {
    pub params: Params,
    pub losses: Vec<f32>,
    pub steps_run: usize,
}

/// Number of distinct window-length crops a speaker's utterances can supply.
fn usable_crops(utterances: &[MelSpectrogram], window: usize) -> usize {
    utterances
        .iter()
        .map(|m| m.num_frames().saturating_sub(window - 1))
        .sum()
}

/// Trains (or finetunes) the speaker encoder on grouped utterances. Each
/// step samples `speakers_per_batch` speakers and `utterances_per_speaker`
/// window crops per speaker, then takes one Adam step on the GE2E loss.
/// `w` is re-clamped to stay >= 1e-4 after every step.
pub fn train_speaker_encoder(
    corpus: &[(String, Vec<MelSpectrogram>)],
    config: &SpeakerTrainConfig,
    mode: TrainMode,
    init_params: Params,
) -> Result<SpeakerTrainOutcome> {
    let window = config.arch.window_frames;
    let usable: Vec<&(String, Vec<MelSpectrogram>)> = corpus
        .iter()
        .filter(|(_, utts)| usable_crops(utts, window) >= 2)
        .collect();
    if usable.len() < 2 {
        return Err(Error::DegenerateBatch(format!(
            "GE2E training needs >= 2 speakers with >= 2 usable {}-frame crops each; found {}",
            window,
            usable.len()
        )));
    }
    if config.utterances_per_speaker < 2 {
        return Err(Error::DegenerateBatch(
            "utterances_per_speaker must be >= 2 for leave-one-out centroids".into(),
        ));
    }

    let mut params = init_params;
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut losses = Vec::with_capacity(config.steps);
    let mut initial_smoothed: Option<f32> = None;

    for step in 0..config.steps {
        // Choose speakers for this batch.
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
            window,
            ShortUtterancePolicy::Skip,
            rng.random(),
        )?;

        let mut g = Graph::new();
        let mut binder = Binder::new(&params);
        let emb = forward_batch(&mut g, &mut binder, &config.arch, &batch.data)?;
        let w = binder.get(&mut g, "sim.w")?;
        let b = binder.get(&mut g, "sim.b")?;
        let loss = ge2e_loss_graph(&mut g, emb, s, config.utterances_per_speaker, w, b)?;
        let loss_value = g.scalar(loss);
        losses.push(loss_value);

        g.backward(loss);
        let mut grads = binder.grads(&g);
        if mode == TrainMode::Finetune {
            grads.retain(|name, _| FINETUNE_PREFIXES.iter().any(|p| name.starts_with(p)));
        }
        opt.step(&mut params, &grads);
        let w_val = params.get_mut(SIM_W)?;
        w_val.mapv_inplace(|v| v.max(1e-4));

        // Early stop on the smoothed loss relative to the first window.
        if let Some(factor) = config.early_stop_factor {
            let window_n = config.smooth_window.max(1);
            if losses.len() >= window_n {
                let smoothed: f32 =
                    losses[losses.len() - window_n..].iter().sum::<f32>() / window_n as f32;
                let initial = *initial_smoothed
                    .get_or_insert_with(|| losses[..window_n].iter().sum::<f32>() / window_n as f32);
                if smoothed < factor * initial {
                    return Ok(SpeakerTrainOutcome {
                        params,
                        losses,
                        steps_run: step + 1,
                    });
                }
            }
        }
    }
    let steps_run = config.steps;
    Ok(SpeakerTrainOutcome {
        params,
        losses,
        steps_run,
    })
}
