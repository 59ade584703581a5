//! One experiment condition, end to end: preprocess audio, train the
//! required encoders, extract per-sample features, then run the stratified
//! split / hyperparameter search / k-fold CV / majority-vote pipeline and
//! persist the report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::assessment::{
    compute_metrics, hyperparameter_search, majority_vote, pool_content_embedding,
    stratified_kfold, stratified_split, train_classifier, ClassLabel, ClassifierKind,
    DEFAULT_TRIALS,
};
use crate::audio::{
    mel_spectrogram, read_wav, resample, trim_silence, MelConfig, MelConfigId, MelSpectrogram,
    VadConfig,
};
use crate::baselines::{
    d_vector, init_dvector, init_xvector, train_dvector, train_xvector, x_vector,
    DVectorConfig, DVectorTrainConfig, XVectorConfig, XVectorTrainConfig,
};
use crate::error::{Error, Result};
use crate::separator::{
    extract_content, init_separator, train_separator, ConditioningSource, SeparatorConfig,
    SeparatorTrainConfig, SeparatorUtterance,
};
use crate::speaker::{
    average_speaker_embedding, embed_utterance, init_speaker_encoder, train_speaker_encoder,
    SpeakerEncoderConfig, SpeakerTrainConfig, TrainMode,
};
use crate::tensorio::TensorContainer;

use super::manifest::{
    augment_sessions, combine_speaker_sessions, load_manifest, Manifest, SessionPolicy,
};
use super::report::{emit_report, unix_timestamp, ClassifierOutcome, EvalReport};

/// Which embedding family feeds the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Content,
    Speaker,
    DVector,
    XVector,
}

impl EmbeddingKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "content" => Some(Self::Content),
            "speaker" => Some(Self::Speaker),
            "dvector" => Some(Self::DVector),
            "xvector" => Some(Self::XVector),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Content => "content",
            Self::Speaker => "speaker",
            Self::DVector => "dvector",
            Self::XVector => "xvector",
        }
    }
}

impl std::fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the separator (or speaker encoder) is conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningMode {
    /// Encoder trained once on the corpus, no finetune pass.
    Pretrained,
    /// Encoder trained, then refined with the recurrent stack frozen.
    Finetuned,
    /// Identity-only one-hot codes; no encoder is trained.
    OneHot,
}

impl ConditioningMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pretrained" => Some(Self::Pretrained),
            "finetuned" => Some(Self::Finetuned),
            "one-hot" => Some(Self::OneHot),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pretrained => "pretrained",
            Self::Finetuned => "finetuned",
            Self::OneHot => "one-hot",
        }
    }
}

impl std::fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything one condition needs. `session_policy` must be `None` exactly
/// when conditioning is one-hot (no encoder is trained, so the grouping
/// distinction does not exist).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub embedding: EmbeddingKind,
    pub conditioning: ConditioningMode,
    pub session_policy: Option<SessionPolicy>,
    pub classifiers: Vec<ClassifierKind>,
    pub seed: u64,
    pub folds: usize,
    pub trials: usize,
    pub eval_fraction: f64,
    pub speaker_steps: usize,
    pub separator_steps: usize,
    pub manifest_path: PathBuf,
    pub workdir: PathBuf,
}

impl ExperimentConfig {
    /// Sensible defaults for everything except the file locations.
    pub fn new(manifest_path: impl Into<PathBuf>, workdir: impl Into<PathBuf>) -> Self {
        Self {
            embedding: EmbeddingKind::Content,
            conditioning: ConditioningMode::Finetuned,
            session_policy: Some(SessionPolicy::Combined),
            classifiers: vec![ClassifierKind::Lda],
            seed: 0,
            folds: 5,
            trials: DEFAULT_TRIALS,
            eval_fraction: 0.2,
            speaker_steps: 300,
            separator_steps: 500,
            manifest_path: manifest_path.into(),
            workdir: workdir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classifiers.is_empty() {
            return Err(Error::ConfigError("classifier set is empty".into()));
        }
        if self.folds < 3 || self.folds % 2 == 0 {
            return Err(Error::ConfigError(format!(
                "folds must be odd and >= 3 for majority voting, got {}",
                self.folds
            )));
        }
        if self.trials == 0 {
            return Err(Error::ConfigError("trials must be at least 1".into()));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::ConfigError(format!(
                "eval_fraction must lie in (0, 1), got {}",
                self.eval_fraction
            )));
        }
        let one_hot = self.conditioning == ConditioningMode::OneHot;
        if one_hot && self.embedding != EmbeddingKind::Content {
            return Err(Error::ConfigError(
                "one-hot conditioning only applies to content embeddings".into(),
            ));
        }
        if one_hot && self.session_policy.is_some() {
            return Err(Error::ConfigError(
                "one-hot mode trains no speaker encoder, so a session policy is meaningless"
                    .into(),
            ));
        }
        if !one_hot && self.session_policy.is_none() {
            return Err(Error::ConfigError(
                "a session policy is required whenever an encoder is trained".into(),
            ));
        }
        if matches!(self.embedding, EmbeddingKind::DVector | EmbeddingKind::XVector)
            && self.conditioning != ConditioningMode::Pretrained
        {
            return Err(Error::ConfigError(format!(
                "{} baselines train once from scratch; conditioning must be pretrained",
                self.embedding
            )));
        }
        Ok(())
    }

    /// Flat key-value view: the config-file format and the report echo.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let classifiers = self
            .classifiers
            .iter()
            .map(|k| k.as_str())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("embedding".into(), self.embedding.to_string()),
            ("conditioning".into(), self.conditioning.to_string()),
            (
                "session-policy".into(),
                self.session_policy.map_or("none".into(), |p| p.to_string()),
            ),
            ("classifiers".into(), classifiers),
            ("seed".into(), self.seed.to_string()),
            ("folds".into(), self.folds.to_string()),
            ("trials".into(), self.trials.to_string()),
            ("eval-fraction".into(), format!("{}", self.eval_fraction)),
            ("speaker-steps".into(), self.speaker_steps.to_string()),
            ("separator-steps".into(), self.separator_steps.to_string()),
            ("manifest".into(), self.manifest_path.display().to_string()),
            ("workdir".into(), self.workdir.display().to_string()),
        ]
    }

    pub fn from_key_values(pairs: &[(String, String)]) -> Result<Self> {
        let mut config = Self::new("", "");
        let mut saw_policy = false;
        let bad = |key: &str, value: &str| {
            Error::ConfigError(format!("bad value {value:?} for key {key:?}"))
        };
        for (key, value) in pairs {
            let value = value.trim();
            match key.as_str() {
                "embedding" => {
                    config.embedding =
                        EmbeddingKind::parse(value).ok_or_else(|| bad(key, value))?
                }
                "conditioning" => {
                    config.conditioning =
                        ConditioningMode::parse(value).ok_or_else(|| bad(key, value))?
                }
                "session-policy" => {
                    saw_policy = true;
                    config.session_policy = if value == "none" {
                        None
                    } else {
                        Some(SessionPolicy::parse(value).ok_or_else(|| bad(key, value))?)
                    };
                }
                "classifiers" => {
                    config.classifiers = value
                        .split(',')
                        .map(|p| ClassifierKind::parse(p.trim()).ok_or_else(|| bad(key, p)))
                        .collect::<Result<_>>()?;
                }
                "seed" => config.seed = value.parse().map_err(|_| bad(key, value))?,
                "folds" => config.folds = value.parse().map_err(|_| bad(key, value))?,
                "trials" => config.trials = value.parse().map_err(|_| bad(key, value))?,
                "eval-fraction" => {
                    config.eval_fraction = value.parse().map_err(|_| bad(key, value))?
                }
                "speaker-steps" => {
                    config.speaker_steps = value.parse().map_err(|_| bad(key, value))?
                }
                "separator-steps" => {
                    config.separator_steps = value.parse().map_err(|_| bad(key, value))?
                }
                "manifest" => config.manifest_path = PathBuf::from(value),
                "workdir" => config.workdir = PathBuf::from(value),
                other => {
                    return Err(Error::ConfigError(format!("unknown config key {other:?}")))
                }
            }
        }
        if !saw_policy && config.conditioning == ConditioningMode::OneHot {
            config.session_policy = None;
        }
        if config.manifest_path.as_os_str().is_empty() {
            return Err(Error::ConfigError("config is missing `manifest`".into()));
        }
        if config.workdir.as_os_str().is_empty() {
            return Err(Error::ConfigError("config is missing `workdir`".into()));
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads the flat key-value config format (blank lines and `#` comments
    /// ignored).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ParseError {
                row: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        Self::from_key_values(&pairs)
    }
}

/// Target sample rate of the whole pipeline.
const PIPELINE_SAMPLE_RATE: u32 = 16_000;

/// Per-record preprocessed features.
pub struct RecordMels {
    pub content: MelSpectrogram,
    pub speaker: MelSpectrogram,
}

fn missing(stage: &str, detail: impl Into<String>) -> Error {
    Error::MissingArtifact { stage: stage.into(), detail: detail.into() }
}

/// Loads (or computes and caches) both mel variants for every record.
pub fn preprocess_manifest(manifest: &Manifest, workdir: &Path) -> Result<Vec<RecordMels>> {
    let cache_dir = workdir.join("mels");
    std::fs::create_dir_all(&cache_dir).map_err(|e| Error::io(&cache_dir, e))?;

    let mut out = Vec::with_capacity(manifest.len());
    for record in &manifest.records {
        let mut hasher = Sha256::new();
        hasher.update(record.audio_path.as_bytes());
        let digest = hasher.finalize();
        let mut tag = String::new();
        for b in &digest[..8] {
            tag.push_str(&format!("{b:02x}"));
        }
        let cache_path = cache_dir.join(format!("{tag}.tensors"));

        if cache_path.exists() {
            let container = TensorContainer::load(&cache_path)?;
            let restore = |name: &str, id: MelConfigId| -> Result<MelSpectrogram> {
                let values = container
                    .get(name)?
                    .to_owned()
                    .into_dimensionality()
                    .map_err(|e| Error::ShapeError(e.to_string()))?;
                Ok(MelSpectrogram {
                    values,
                    config_id: id,
                    source_id: record.speaker_id.clone(),
                })
            };
            out.push(RecordMels {
                content: restore("content", MelConfigId::Content)?,
                speaker: restore("speaker", MelConfigId::Speaker)?,
            });
            continue;
        }

        if !Path::new(&record.audio_path).exists() {
            return Err(missing("preprocess", record.audio_path.clone()));
        }
        let audio = read_wav(&record.audio_path)?;
        let audio = if audio.sample_rate == PIPELINE_SAMPLE_RATE {
            audio
        } else {
            resample(&audio, PIPELINE_SAMPLE_RATE)?
        };
        let audio = trim_silence(&audio, &VadConfig::default())?;
        let key = &record.speaker_id;
        let content = mel_spectrogram(&audio, &MelConfig::content(), key)?;
        let speaker = mel_spectrogram(&audio, &MelConfig::speaker(), key)?;

        let mut container = TensorContainer::new();
        container.insert("content", content.values.to_owned().into_dyn());
        container.insert("speaker", speaker.values.to_owned().into_dyn());
        container.save(&cache_path)?;
        out.push(RecordMels { content, speaker });
    }
    Ok(out)
}

/// Groups speaker-config mels under the session policy for encoder training.
pub fn grouped_speaker_mels(
    manifest: &Manifest,
    mels: &[RecordMels],
    policy: SessionPolicy,
) -> Vec<(String, Vec<MelSpectrogram>)> {
    combine_speaker_sessions(manifest, policy)
        .into_iter()
        .map(|(key, members)| {
            let utts = members.iter().map(|&i| mels[i].speaker.clone()).collect();
            (key, utts)
        })
        .collect()
}

/// Trains the speaker encoder (optionally with the finetune refinement) and
/// returns its parameters.
fn train_condition_encoder(
    corpus: &[(String, Vec<MelSpectrogram>)],
    arch: &SpeakerEncoderConfig,
    steps: usize,
    seed: u64,
    finetune: bool,
) -> Result<crate::nn::params::Params> {
    let mut train_config = SpeakerTrainConfig {
        arch: arch.clone(),
        speakers_per_batch: 8,
        utterances_per_speaker: 3,
        steps,
        lr: 5e-3,
        seed,
        early_stop_factor: None,
        smooth_window: 20,
    };
    let init = init_speaker_encoder(arch, seed);
    let full = train_speaker_encoder(corpus, &train_config, TrainMode::Full, init)?;
    if !finetune {
        return Ok(full.params);
    }
    train_config.steps = steps.div_ceil(2);
    train_config.seed = seed.wrapping_add(0x5EED);
    let refined =
        train_speaker_encoder(corpus, &train_config, TrainMode::Finetune, full.params)?;
    Ok(refined.params)
}

/// Speaker-level conditioning vectors: every record key maps to the average
/// utterance embedding of its policy group.
pub fn conditioning_embeddings(
    manifest: &Manifest,
    mels: &[RecordMels],
    policy: SessionPolicy,
    arch: &SpeakerEncoderConfig,
    params: &crate::nn::params::Params,
) -> Result<BTreeMap<String, Array1<f32>>> {
    let mut map = BTreeMap::new();
    for (key, members) in combine_speaker_sessions(manifest, policy) {
        let utts: Vec<_> = members
            .iter()
            .map(|&i| embed_utterance(&mels[i].speaker, params, arch, &key))
            .collect::<Result<_>>()?;
        let speaker_level = average_speaker_embedding(&utts)?;
        for &i in &members {
            map.insert(
                manifest.records[i].speaker_id.clone(),
                speaker_level.values.clone(),
            );
        }
    }
    Ok(map)
}

/// Extracts the configured embedding for every record, as classifier-ready
/// feature rows. Returns the feature matrix and, for content embeddings,
/// the conditioning width. Trained parameters are checkpointed into the
/// work directory so `extract` can reuse them.
fn extract_features(
    manifest: &Manifest,
    mels: &[RecordMels],
    config: &ExperimentConfig,
) -> Result<(Array2<f32>, Option<usize>)> {
    let checkpoint = |name: &str, params: &crate::nn::params::Params| -> Result<()> {
        params.save(config.workdir.join(name))
    };
    let n = manifest.len();
    let rows_to_matrix = |rows: Vec<Array1<f32>>| -> Result<Array2<f32>> {
        let width = rows.first().map_or(0, |r| r.len());
        let mut m = Array2::<f32>::zeros((n, width));
        for (i, row) in rows.iter().enumerate() {
            m.row_mut(i).assign(row);
        }
        Ok(m)
    };

    match config.embedding {
        EmbeddingKind::Content => {
            let source = match config.conditioning {
                ConditioningMode::OneHot => {
                    let mut keys: Vec<String> = manifest
                        .records
                        .iter()
                        .map(|r| r.speaker_id.clone())
                        .collect();
                    keys.sort();
                    ConditioningSource::OneHot(keys)
                }
                mode => {
                    let policy = config.session_policy.expect("validated");
                    let corpus = grouped_speaker_mels(manifest, mels, policy);
                    let arch = SpeakerEncoderConfig::desk();
                    let params = train_condition_encoder(
                        &corpus,
                        &arch,
                        config.speaker_steps,
                        config.seed,
                        mode == ConditioningMode::Finetuned,
                    )?;
                    checkpoint("speaker.ckpt", &params)?;
                    ConditioningSource::Embeddings(conditioning_embeddings(
                        manifest, mels, policy, &arch, &params,
                    )?)
                }
            };
            let dim = source.dim()?;
            let arch = SeparatorConfig::desk(dim);
            let dataset: Vec<SeparatorUtterance> = manifest
                .records
                .iter()
                .zip(mels)
                .map(|(r, m)| SeparatorUtterance {
                    speaker_key: r.speaker_id.clone(),
                    mel: m.content.clone(),
                })
                .collect();
            let train_config =
                SeparatorTrainConfig::new(arch.clone(), config.separator_steps, config.seed);
            let outcome = train_separator(
                &dataset,
                &source,
                &train_config,
                init_separator(&arch, config.seed),
            )?;
            checkpoint("separator.ckpt", &outcome.params)?;
            let rows = manifest
                .records
                .iter()
                .zip(mels)
                .map(|(r, m)| {
                    let code = extract_content(
                        &m.content,
                        &r.speaker_id,
                        &source,
                        &outcome.params,
                        &arch,
                    )?;
                    pool_content_embedding(&code)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((rows_to_matrix(rows)?, Some(dim)))
        }
        EmbeddingKind::Speaker => {
            let policy = config.session_policy.expect("validated");
            let corpus = grouped_speaker_mels(manifest, mels, policy);
            let arch = SpeakerEncoderConfig::desk();
            let params = train_condition_encoder(
                &corpus,
                &arch,
                config.speaker_steps,
                config.seed,
                config.conditioning == ConditioningMode::Finetuned,
            )?;
            checkpoint("speaker.ckpt", &params)?;
            let rows = manifest
                .records
                .iter()
                .zip(mels)
                .map(|(r, m)| {
                    Ok(embed_utterance(&m.speaker, &params, &arch, &r.speaker_id)?.values)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((rows_to_matrix(rows)?, None))
        }
        EmbeddingKind::DVector => {
            let policy = config.session_policy.expect("validated");
            let corpus = grouped_speaker_mels(manifest, mels, policy);
            let arch = DVectorConfig::desk();
            let train_config = DVectorTrainConfig {
                arch: arch.clone(),
                steps: config.speaker_steps,
                seed: config.seed,
                ..DVectorTrainConfig::default()
            };
            let outcome =
                train_dvector(&corpus, &train_config, init_dvector(&arch, config.seed))?;
            checkpoint("dvector.ckpt", &outcome.params)?;
            let rows = mels
                .iter()
                .map(|m| Ok(d_vector(&m.speaker, &outcome.params, &arch)?.values))
                .collect::<Result<Vec<_>>>()?;
            Ok((rows_to_matrix(rows)?, None))
        }
        EmbeddingKind::XVector => {
            let policy = config.session_policy.expect("validated");
            let corpus = grouped_speaker_mels(manifest, mels, policy);
            let arch = XVectorConfig::desk();
            let train_config = XVectorTrainConfig {
                arch: arch.clone(),
                steps: config.speaker_steps,
                seed: config.seed,
                ..XVectorTrainConfig::default()
            };
            let outcome =
                train_xvector(&corpus, &train_config, init_xvector(&arch, config.seed))?;
            checkpoint("xvector.ckpt", &outcome.params)?;
            let rows = mels
                .iter()
                .map(|m| Ok(x_vector(&m.speaker, &outcome.params, &arch)?.values))
                .collect::<Result<Vec<_>>>()?;
            Ok((rows_to_matrix(rows)?, None))
        }
    }
}

/// Runs one condition and persists `report.txt` into the work directory.
pub fn run_condition(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    std::fs::create_dir_all(&config.workdir).map_err(|e| Error::io(&config.workdir, e))?;

    if !config.manifest_path.exists() {
        return Err(missing("manifest", config.manifest_path.display().to_string()));
    }
    let manifest = load_manifest(&config.manifest_path)?;
    let manifest = if manifest.augmented {
        manifest
    } else {
        augment_sessions(&manifest)?
    };

    let mels = preprocess_manifest(&manifest, &config.workdir)?;
    let (features, conditioning_dim) = extract_features(&manifest, &mels, config)?;
    let labels: Vec<ClassLabel> = manifest.records.iter().map(|r| r.label).collect();

    // Persist the per-record feature matrix so `classify` and `plot` can
    // consume this condition's embeddings directly.
    let mut feature_file = TensorContainer::new();
    feature_file.insert("features", features.clone().into_dyn());
    let label_values: Array1<f32> = labels.iter().map(|l| l.index() as f32).collect();
    feature_file.insert("labels", label_values.into_dyn());
    feature_file.save(config.workdir.join("features.tensors"))?;

    // Held-out evaluation split, then folds over the training portion.
    let (train_idx, eval_idx) = stratified_split(&labels, config.eval_fraction, config.seed)?;
    let gather = |idx: &[usize]| -> (Array2<f32>, Vec<ClassLabel>) {
        let x = Array2::from_shape_fn((idx.len(), features.ncols()), |(r, c)| {
            features[[idx[r], c]]
        });
        let y = idx.iter().map(|&i| labels[i]).collect();
        (x, y)
    };
    let (train_x, train_y) = gather(&train_idx);
    let (eval_x, eval_y) = gather(&eval_idx);
    let folds = stratified_kfold(&train_y, config.folds, config.seed)?;

    let mut outcomes = Vec::new();
    for &kind in &config.classifiers {
        let search = hyperparameter_search(
            kind,
            &train_x,
            &train_y,
            config.trials,
            config.folds,
            config.seed,
        )?;
        let mut fold_metrics = Vec::with_capacity(folds.k);
        let mut votes = Vec::with_capacity(folds.k);
        for fold in 0..folds.k {
            let sub = |idx: &[usize]| -> (Array2<f32>, Vec<ClassLabel>) {
                let x = Array2::from_shape_fn((idx.len(), train_x.ncols()), |(r, c)| {
                    train_x[[idx[r], c]]
                });
                let y = idx.iter().map(|&i| train_y[i]).collect();
                (x, y)
            };
            let (fold_train_x, fold_train_y) = sub(&folds.train_indices(fold));
            let (fold_eval_x, fold_eval_y) = sub(&folds.eval_indices(fold));
            let model = train_classifier(
                &search.spec,
                &fold_train_x,
                &fold_train_y,
                config.seed.wrapping_add(fold as u64),
            )?;
            fold_metrics.push(compute_metrics(&model.predict(&fold_eval_x)?, &fold_eval_y)?);
            votes.push(model.predict(&eval_x)?);
        }
        let ensembled_predictions = majority_vote(&votes)?;
        let ensembled = compute_metrics(&ensembled_predictions, &eval_y)?;
        outcomes.push(ClassifierOutcome {
            kind,
            spec: search.spec.describe(),
            fold_metrics,
            ensembled,
            ensembled_predictions,
        });
    }

    let report = EvalReport {
        timestamp: unix_timestamp(),
        seed: config.seed,
        conditioning_dim,
        config_echo: config.to_key_values(),
        eval_labels: eval_y,
        classifiers: outcomes,
    };
    emit_report(&report, config.workdir.join("report.txt"))?;
    Ok(report)
}
