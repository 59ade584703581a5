//! Separator training: same-speaker autoencoding of random fixed-length
//! crops, with the speaker conditioner held constant.

use std::path::PathBuf;

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{MelConfigId, MelSpectrogram};
use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::graph::Graph;
use crate::nn::params::{Binder, Params};

use super::condition::ConditioningSource;
use super::loss::{separation_loss_graph, SeparationLossBreakdown, DEFAULT_LAMBDA, DEFAULT_MU};
use super::model::{SeparatorConfig, DOWNSAMPLE};

/// One training utterance: content-config mel frames plus the speaker key
/// used to look up the conditioning vector. Reconstruction targets are
/// always the utterance itself, so all pairs are same-speaker.
#[derive(Debug, Clone)]
pub struct SeparatorUtterance {
    pub speaker_key: String,
    pub mel: MelSpectrogram,
}

#[derive(Debug, Clone)]
pub struct SeparatorTrainConfig {
    pub arch: SeparatorConfig,
    pub steps: usize,
    pub lr: f32,
    /// Crops per optimization step.
    pub crops_per_batch: usize,
    /// Frames per crop; must be a multiple of 32.
    pub crop_frames: usize,
    pub mu: f32,
    pub lambda: f32,
    pub seed: u64,
    /// Stop once the smoothed reconstruction loss drops below
    /// `factor * initial smoothed loss`.
    pub early_stop_factor: Option<f32>,
    pub smooth_window: usize,
    /// Write a parameter checkpoint every this many steps.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl SeparatorTrainConfig {
    pub fn new(arch: SeparatorConfig, steps: usize, seed: u64) -> Self {
        Self {
            arch,
            steps,
            lr: 1e-4,
            crops_per_batch: 2,
            crop_frames: 128,
            mu: DEFAULT_MU,
            lambda: DEFAULT_LAMBDA,
            seed,
            early_stop_factor: None,
            smooth_window: 25,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

/// Result of a training run: the updated parameters plus one loss breakdown
/// per executed step (the line-oriented progress record).
#[derive(Debug)]
pub struct SeparatorTrainOutcome {
    pub params: Params,
    pub losses: Vec<SeparationLossBreakdown>,
    pub steps_run: usize,
}

fn smoothed(values: &[f32], window: usize) -> f32 {
    let w = window.min(values.len()).max(1);
    let tail = &values[values.len() - w..];
    tail.iter().sum::<f32>() / w as f32
}

/// Trains the separator on same-speaker reconstruction. `init_params` are
/// the starting weights (see [`super::model::init_separator`]); the
/// conditioning source is read-only, so conditioner parameters are untouched
/// by construction. Utterances shorter than one crop are skipped.
pub fn train_separator(
    dataset: &[SeparatorUtterance],
    conditioner: &ConditioningSource,
    config: &SeparatorTrainConfig,
    init_params: Params,
) -> Result<SeparatorTrainOutcome> {
    if config.crop_frames == 0 || config.crop_frames % DOWNSAMPLE != 0 {
        return Err(Error::ConfigError(format!(
            "crop_frames must be a positive multiple of {DOWNSAMPLE}, got {}",
            config.crop_frames
        )));
    }
    if config.crops_per_batch == 0 {
        return Err(Error::ConfigError("crops_per_batch must be at least 1".into()));
    }
    let dim = conditioner.dim()?;
    if dim != config.arch.conditioning_dim {
        return Err(Error::ConfigMismatch(format!(
            "conditioning source has width {dim}, separator expects {}",
            config.arch.conditioning_dim
        )));
    }

    // Resolve conditioning up front so missing speakers fail before any
    // training work, and collect croppable utterances.
    let mut usable: Vec<(usize, Array1<f32>)> = Vec::new();
    for (i, utt) in dataset.iter().enumerate() {
        if utt.mel.config_id != MelConfigId::Content {
            return Err(Error::ConfigMismatch(format!(
                "separator training expects CONTENT mel features, got {} for {}",
                utt.mel.config_id, utt.mel.source_id
            )));
        }
        let cond = conditioner.resolve(&utt.speaker_key)?;
        if utt.mel.num_frames() >= config.crop_frames {
            usable.push((i, cond));
        }
    }
    if usable.is_empty() && config.steps > 0 {
        return Err(Error::DegenerateBatch(format!(
            "no utterance has at least {} frames",
            config.crop_frames
        )));
    }

    let n_mels = config.arch.n_mels;
    let mut params = init_params;
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut losses: Vec<SeparationLossBreakdown> = Vec::new();
    let mut recon_history: Vec<f32> = Vec::new();
    let mut initial_recon: Option<f32> = None;
    let mut steps_run = 0;

    for step in 0..config.steps {
        let b = config.crops_per_batch;
        let mut batch = Array3::zeros((b, n_mels, config.crop_frames));
        let mut cond = Array2::zeros((b, dim));
        for bi in 0..b {
            let (utt_idx, cvec) = &usable[rng.random_range(0..usable.len())];
            let mel = &dataset[*utt_idx].mel;
            let max_off = mel.num_frames() - config.crop_frames;
            let off = if max_off == 0 { 0 } else { rng.random_range(0..=max_off) };
            for c in 0..n_mels {
                for t in 0..config.crop_frames {
                    batch[[bi, c, t]] = mel.values[[c, off + t]];
                }
            }
            for (d, v) in cvec.iter().enumerate() {
                cond[[bi, d]] = *v;
            }
        }

        let mut g = Graph::new();
        let mut binder = Binder::new(&params);
        let mel_v = g.input(batch.into_dyn());
        let cond_v = g.input(cond.into_dyn());
        let nodes = separation_loss_graph(
            &mut g,
            &mut binder,
            &config.arch,
            mel_v,
            cond_v,
            config.crop_frames,
            config.mu,
            config.lambda,
        )?;
        g.backward(nodes.total);
        let grads = binder.grads(&g);
        opt.step(&mut params, &grads);

        let breakdown = SeparationLossBreakdown {
            recon: g.scalar(nodes.recon),
            recon0: g.scalar(nodes.recon0),
            content: g.scalar(nodes.content),
            mu: config.mu,
            lambda: config.lambda,
            total: g.scalar(nodes.total),
        };
        recon_history.push(breakdown.recon);
        losses.push(breakdown);
        steps_run = step + 1;

        if let (Some(every), Some(dir)) = (config.checkpoint_every, config.checkpoint_dir.as_ref()) {
            if every > 0 && steps_run % every == 0 {
                params.save(dir.join(format!("separator-{steps_run:06}.tensors")))?;
            }
        }

        if recon_history.len() == config.smooth_window.max(1) && initial_recon.is_none() {
            initial_recon = Some(smoothed(&recon_history, config.smooth_window));
        }
        if let (Some(factor), Some(initial)) = (config.early_stop_factor, initial_recon) {
            if smoothed(&recon_history, config.smooth_window) < factor * initial {
                break;
            }
        }
    }

    Ok(SeparatorTrainOutcome {
        params,
        losses,
        steps_run,
    })
}
