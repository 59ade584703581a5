//! Command-line driver: preprocessing, synthetic-corpus generation, encoder
//! and separator training, embedding extraction, classification, full
//! experiment conditions, 2-D projection plots, and report inspection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};

use voicesep::assessment::{
    compute_metrics, hyperparameter_search, majority_vote, stratified_kfold, stratified_split,
    train_classifier, ClassLabel, ClassifierKind, Metrics, DEFAULT_TRIALS,
};
use voicesep::audio::{
    mel_spectrogram, read_wav, resample, trim_silence, AudioSegment, MelConfig, MelConfigId,
    MelSpectrogram, VadConfig,
};
use voicesep::baselines::{d_vector, x_vector, DVectorConfig, XVectorConfig};
use voicesep::error::{Error, Result};
use voicesep::experiments::{
    conditioning_embeddings, dementiabank_structure_manifest, generate_synthetic_corpus,
    grouped_speaker_mels, load_manifest, parse_report, preprocess_manifest, project_embeddings_2d,
    run_condition, save_manifest, CorpusSpec, ExperimentConfig, Manifest, SessionPolicy,
};
use voicesep::nn::Params;
use voicesep::separator::{
    extract_content, init_separator, train_separator, ConditioningSource, SeparatorConfig,
    SeparatorTrainConfig, SeparatorUtterance,
};
use voicesep::speaker::{
    embed_utterance, equal_error_rate, init_speaker_encoder, train_speaker_encoder,
    SpeakerEncoderConfig, SpeakerTrainConfig, TrainMode, Trial,
};
use voicesep::tensorio::TensorContainer;

const PIPELINE_SAMPLE_RATE: u32 = 16_000;

#[derive(Parser)]
#[command(name = "voicesep", version, about = "Speech content/identity separation pipeline")]
struct Cli {
    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration file (flat key=value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a WAV file into log-mel features in the tensor container.
    Preprocess(PreprocessArgs),
    /// Generate the synthetic two-class corpus (audio plus manifest).
    GenCorpus(GenCorpusArgs),
    /// Train or finetune the GE2E speaker encoder on a corpus.
    TrainSpeaker(TrainSpeakerArgs),
    /// Train the content separator on a corpus.
    TrainSep(TrainSepArgs),
    /// Extract one embedding from a WAV file using trained checkpoints.
    Extract(ExtractArgs),
    /// Run hyperparameter search, k-fold CV, and voting on a feature matrix.
    Classify(ClassifyArgs),
    /// Run one full experiment condition from the configuration file.
    Experiment(ExperimentArgs),
    /// Project an embedding matrix to 2-D coordinates for plotting.
    Plot(PlotArgs),
    /// Parse, validate, and summarize an evaluation report.
    Report(ReportArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Input WAV file (PCM 16-bit or float32).
    #[arg(long)]
    wav: PathBuf,
    /// Output tensor container receiving the mel grids.
    #[arg(long)]
    out: PathBuf,
    /// Which mel preset(s) to compute.
    #[arg(long, value_enum, default_value_t = MelChoice::Both)]
    mel: MelChoice,
    /// Skip voice-activity trimming.
    #[arg(long)]
    no_trim: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MelChoice {
    Content,
    Speaker,
    Both,
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Directory receiving the WAV files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Path of the manifest CSV to write.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 20)]
    speakers: usize,
    #[arg(long, default_value_t = 10)]
    utterances: usize,
    #[arg(long, default_value_t = 1)]
    sessions: usize,
    /// 1 = identity-only corpus, 2 = CN/IM content classes.
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Instead of audio, write the audio-free manifest replicating the
    /// published visit structure (292 speakers, 552 session samples).
    #[arg(long)]
    visit_structure: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeChoice {
    Full,
    Finetune,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyChoice {
    Combined,
    NotCombined,
}

impl PolicyChoice {
    fn policy(self) -> SessionPolicy {
        match self {
            Self::Combined => SessionPolicy::Combined,
            Self::NotCombined => SessionPolicy::NotCombined,
        }
    }
}

#[derive(Args)]
struct TrainSpeakerArgs {
    /// Corpus manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Working directory for cached features.
    #[arg(long)]
    workdir: PathBuf,
    /// `full` trains everything; `finetune` updates only the projection and
    /// similarity scaling on top of `--init`.
    #[arg(long, value_enum, default_value_t = ModeChoice::Full)]
    mode: ModeChoice,
    /// Checkpoint to start from (required for finetune).
    #[arg(long)]
    init: Option<PathBuf>,
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 5e-3)]
    lr: f32,
    /// How per-speaker sessions are grouped into training identities.
    #[arg(long, value_enum, default_value_t = PolicyChoice::Combined)]
    sessions: PolicyChoice,
    /// After training, score all same/cross pairs and report the EER.
    #[arg(long)]
    eer: bool,
}

#[derive(Args)]
struct TrainSepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    workdir: PathBuf,
    /// Speaker-encoder checkpoint for conditioning; omitted = one-hot codes.
    #[arg(long)]
    speaker_ckpt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyChoice::Combined)]
    sessions: PolicyChoice,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    steps: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingChoice {
    Content,
    Speaker,
    Dvector,
    Xvector,
}

#[derive(Args)]
struct ExtractArgs {
    /// Which embedding to extract.
    #[arg(long, value_enum)]
    embedding: EmbeddingChoice,
    /// Checkpoint of the extractor itself.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    wav: PathBuf,
    /// Output tensor container.
    #[arg(long)]
    out: PathBuf,
    /// Identity key recorded with the embedding.
    #[arg(long, default_value = "utt")]
    speaker_key: String,
    /// Speaker-encoder checkpoint (required for content: it conditions the
    /// separator on this utterance's own speaker embedding).
    #[arg(long)]
    speaker_ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Tensor container holding `features` [N, D] and `labels` [N] (0 = CN,
    /// 1 = IM).
    #[arg(long)]
    features: PathBuf,
    /// Comma-separated classifier kinds (lda, svm, dt, rf, linear-head).
    #[arg(long, default_value = "lda")]
    classifier: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Fraction held out for the voted evaluation.
    #[arg(long, default_value_t = 0.2)]
    eval_fraction: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Override the workdir named in the configuration file.
    #[arg(long)]
    workdir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Tensor container holding `embeddings` (or `features`) [N, D], with an
    /// optional `labels` [N] tensor.
    #[arg(long)]
    embeddings: PathBuf,
    /// Output text file: one `x<TAB>y[<TAB>label]` line per embedding.
    #[arg(long)]
    out: PathBuf,
    /// Also render a simple SVG scatter plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// An evaluation report produced by `experiment`.
    #[arg(long)]
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed.unwrap_or(0);
    let result = match cli.command {
        Command::Preprocess(args) => cmd_preprocess(&args),
        Command::GenCorpus(args) => cmd_gen_corpus(&args, seed),
        Command::TrainSpeaker(args) => cmd_train_speaker(&args, seed),
        Command::TrainSep(args) => cmd_train_sep(&args, seed),
        Command::Extract(args) => cmd_extract(&args),
        Command::Classify(args) => cmd_classify(&args, seed),
        Command::Experiment(args) => cmd_experiment(&args, cli.config.as_deref(), cli.seed),
        Command::Plot(args) => cmd_plot(&args, seed),
        Command::Report(args) => cmd_report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Reads a WAV, resamples to the pipeline rate, and optionally trims silence.
fn load_audio(path: &Path, trim: bool) -> Result<AudioSegment> {
    let audio = read_wav(path)?;
    let audio = if audio.sample_rate == PIPELINE_SAMPLE_RATE {
        audio
    } else {
        resample(&audio, PIPELINE_SAMPLE_RATE)?
    };
    if trim {
        trim_silence(&audio, &VadConfig::default())
    } else {
        Ok(audio)
    }
}

fn cmd_preprocess(args: &PreprocessArgs) -> Result<()> {
    let audio = load_audio(&args.wav, !args.no_trim)?;
    let key = args
        .wav
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "utt".into());

    let mut container = TensorContainer::new();
    let mut store = |config: MelConfig| -> Result<()> {
        let mel = mel_spectrogram(&audio, &config, &key)?;
        println!(
            "mel={} channels={} frames={}",
            config.id,
            mel.values.nrows(),
            mel.values.ncols()
        );
        let name = match config.id {
            MelConfigId::Content => "content",
            MelConfigId::Speaker => "speaker",
        };
        container.insert(name, mel.values.into_dyn());
        Ok(())
    };
    match args.mel {
        MelChoice::Content => store(MelConfig::content())?,
        MelChoice::Speaker => store(MelConfig::speaker())?,
        MelChoice::Both => {
            store(MelConfig::content())?;
            store(MelConfig::speaker())?;
        }
    }
    container.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_gen_corpus(args: &GenCorpusArgs, seed: u64) -> Result<()> {
    let manifest = if args.visit_structure {
        dementiabank_structure_manifest()
    } else {
        let spec = CorpusSpec {
            n_speakers: args.speakers,
            utterances_per_speaker: args.utterances,
            sessions_per_speaker: args.sessions,
            content_classes: args.classes,
            seed,
        };
        generate_synthetic_corpus(&spec, &args.out_dir)?
    };
    save_manifest(&manifest, &args.manifest)?;
    let (cn, im) = manifest.class_counts();
    println!(
        "records={} speakers={} cn={} im={}",
        manifest.len(),
        manifest.base_speaker_count(),
        cn,
        im
    );
    println!("wrote {}", args.manifest.display());
    Ok(())
}

/// Loads a manifest and applies session augmentation if not already applied.
fn load_augmented(path: &Path) -> Result<Manifest> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage: "manifest".into(),
            detail: path.display().to_string(),
        });
    }
    let manifest = load_manifest(path)?;
    if manifest.augmented {
        Ok(manifest)
    } else {
        voicesep::experiments::augment_sessions(&manifest)
    }
}

fn cmd_train_speaker(args: &TrainSpeakerArgs, seed: u64) -> Result<()> {
    let manifest = load_augmented(&args.manifest)?;
    let mels = preprocess_manifest(&manifest, &args.workdir)?;
    let corpus = grouped_speaker_mels(&manifest, &mels, args.sessions.policy());

    let arch = SpeakerEncoderConfig::desk();
    let (mode, init) = match args.mode {
        ModeChoice::Full => {
            let init = match &args.init {
                Some(path) => Params::load(path)?,
                None => init_speaker_encoder(&arch, seed),
            };
            (TrainMode::Full, init)
        }
        ModeChoice::Finetune => {
            let path = args.init.as_ref().ok_or_else(|| {
                Error::ConfigError("finetune mode requires --init <checkpoint>".into())
            })?;
            (TrainMode::Finetune, Params::load(path)?)
        }
    };
    let config = SpeakerTrainConfig {
        arch: arch.clone(),
        steps: args.steps,
        lr: args.lr,
        seed,
        ..SpeakerTrainConfig::default()
    };
    let outcome = train_speaker_encoder(&corpus, &config, mode, init)?;
    for (step, loss) in outcome.losses.iter().enumerate() {
        println!("step={step} loss={loss:.6}");
    }
    outcome.params.save(&args.out)?;
    println!("wrote {}", args.out.display());

    if args.eer {
        let (eer, n) = corpus_eer(&corpus, &outcome.params, &arch)?;
        println!("eer={eer:.4}");
        println!("trials={n}");
    }
    Ok(())
}

/// All-pairs verification trials over the corpus: cosine similarity between
/// utterance embeddings, target = same training identity.
fn corpus_eer(
    corpus: &[(String, Vec<MelSpectrogram>)],
    params: &Params,
    arch: &SpeakerEncoderConfig,
) -> Result<(f32, usize)> {
    let mut embedded: Vec<(usize, Array1<f32>)> = Vec::new();
    for (group, (key, utts)) in corpus.iter().enumerate() {
        for utt in utts {
            match embed_utterance(utt, params, arch, key) {
                Ok(e) => embedded.push((group, e.values)),
                // Utterances shorter than one analysis window carry no trial.
                Err(Error::UtteranceTooShort { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    let mut trials: Vec<Trial> = Vec::new();
    for i in 0..embedded.len() {
        for j in (i + 1)..embedded.len() {
            let score = embedded[i].1.dot(&embedded[j].1);
            trials.push((score, embedded[i].0 == embedded[j].0));
        }
    }
    let eer = equal_error_rate(&trials)?;
    Ok((eer, trials.len()))
}

fn cmd_train_sep(args: &TrainSepArgs, seed: u64) -> Result<()> {
    let manifest = load_augmented(&args.manifest)?;
    let mels = preprocess_manifest(&manifest, &args.workdir)?;

    let source = match &args.speaker_ckpt {
        Some(path) => {
            let params = Params::load(path)?;
            let arch = SpeakerEncoderConfig::desk();
            ConditioningSource::Embeddings(conditioning_embeddings(
                &manifest,
                &mels,
                args.sessions.policy(),
                &arch,
                &params,
            )?)
        }
        None => {
            let mut keys: Vec<String> =
                manifest.records.iter().map(|r| r.speaker_id.clone()).collect();
            keys.sort();
            ConditioningSource::OneHot(keys)
        }
    };
    let dim = source.dim()?;
    println!("conditioning-dim={dim}");

    let arch = SeparatorConfig::desk(dim);
    let dataset: Vec<SeparatorUtterance> = manifest
        .records
        .iter()
        .zip(&mels)
        .map(|(r, m)| SeparatorUtterance {
            speaker_key: r.speaker_id.clone(),
            mel: m.content.clone(),
        })
        .collect();
    let config = SeparatorTrainConfig::new(arch.clone(), args.steps, seed);
    let outcome = train_separator(&dataset, &source, &config, init_separator(&arch, seed))?;
    for (step, loss) in outcome.losses.iter().enumerate() {
        println!(
            "step={step} recon={:.6} recon0={:.6} content={:.6} total={:.6}",
            loss.recon, loss.recon0, loss.content, loss.total
        );
    }
    outcome.params.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let audio = load_audio(&args.wav, true)?;
    let key = args.speaker_key.as_str();
    let ckpt = Params::load(&args.ckpt)?;

    let mut container = TensorContainer::new();
    match args.embedding {
        EmbeddingChoice::Content => {
            let speaker_ckpt_path = args.speaker_ckpt.as_ref().ok_or_else(|| {
                Error::ConfigError(
                    "content extraction requires --speaker-ckpt for conditioning".into(),
                )
            })?;
            let speaker_params = Params::load(speaker_ckpt_path)?;
            let speaker_arch = SpeakerEncoderConfig::desk();
            let speaker_mel = mel_spectrogram(&audio, &MelConfig::speaker(), key)?;
            let emb = embed_utterance(&speaker_mel, &speaker_params, &speaker_arch, key)?;
            let source = ConditioningSource::Embeddings(BTreeMap::from([(
                key.to_string(),
                emb.values,
            )]));

            let content_mel = mel_spectrogram(&audio, &MelConfig::content(), key)?;
            let arch = SeparatorConfig::desk(source.dim()?);
            let code = extract_content(&content_mel, key, &source, &ckpt, &arch)?;
            let pooled = voicesep::assessment::pool_content_embedding(&code)?;
            println!(
                "embedding=content rows={} cols={} pooled={}",
                code.values.nrows(),
                code.values.ncols(),
                pooled.len()
            );
            container.insert("content", code.values.into_dyn());
            container.insert("pooled", pooled.into_dyn());
        }
        EmbeddingChoice::Speaker => {
            let arch = SpeakerEncoderConfig::desk();
            let mel = mel_spectrogram(&audio, &MelConfig::speaker(), key)?;
            let emb = embed_utterance(&mel, &ckpt, &arch, key)?;
            println!("embedding=speaker width={}", emb.values.len());
            container.insert("speaker", emb.values.into_dyn());
        }
        EmbeddingChoice::Dvector => {
            let arch = DVectorConfig::desk();
            let mel = mel_spectrogram(&audio, &MelConfig::speaker(), key)?;
            let v = d_vector(&mel, &ckpt, &arch)?;
            println!("embedding=dvector width={}", v.values.len());
            container.insert("dvector", v.values.into_dyn());
        }
        EmbeddingChoice::Xvector => {
            let arch = XVectorConfig::desk();
            let mel = mel_spectrogram(&audio, &MelConfig::speaker(), key)?;
            let v = x_vector(&mel, &ckpt, &arch)?;
            println!("embedding=xvector width={}", v.values.len());
            container.insert("xvector", v.values.into_dyn());
        }
    }
    container.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Reads a `[N, D]` matrix plus parallel `labels` from a tensor container.
fn load_feature_matrix(path: &Path) -> Result<(Array2<f32>, Vec<ClassLabel>)> {
    let container = TensorContainer::load(path)?;
    let features: Array2<f32> = container
        .get("features")?
        .to_owned()
        .into_dimensionality()
        .map_err(|e| Error::ShapeError(e.to_string()))?;
    let raw: Array1<f32> = container
        .get("labels")?
        .to_owned()
        .into_dimensionality()
        .map_err(|e| Error::ShapeError(e.to_string()))?;
    let labels = raw
        .iter()
        .map(|&v| ClassLabel::from_index(v as usize))
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != features.nrows() {
        return Err(Error::ShapeError(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.nrows()
        )));
    }
    Ok((features, labels))
}

fn print_metrics(prefix: &str, m: &Metrics) {
    println!(
        "{prefix} accuracy={:.4} f1={:.4} specificity={:.4} recall={:.4}",
        m.accuracy, m.f1, m.specificity, m.recall
    );
}

fn cmd_classify(args: &ClassifyArgs, seed: u64) -> Result<()> {
    let kinds = args
        .classifier
        .split(',')
        .map(|p| {
            let p = p.trim();
            ClassifierKind::parse(p)
                .ok_or_else(|| Error::ConfigError(format!("unknown classifier {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (features, labels) = load_feature_matrix(&args.features)?;

    let (train_idx, eval_idx) = stratified_split(&labels, args.eval_fraction, seed)?;
    let gather = |idx: &[usize]| -> (Array2<f32>, Vec<ClassLabel>) {
        let x = Array2::from_shape_fn((idx.len(), features.ncols()), |(r, c)| {
            features[[idx[r], c]]
        });
        (x, idx.iter().map(|&i| labels[i]).collect())
    };
    let (train_x, train_y) = gather(&train_idx);
    let (eval_x, eval_y) = gather(&eval_idx);
    let folds = stratified_kfold(&train_y, args.folds, seed)?;

    for kind in kinds {
        let search =
            hyperparameter_search(kind, &train_x, &train_y, args.trials, args.folds, seed)?;
        println!(
            "search classifier={kind} spec=\"{}\" cv-accuracy={:.4}",
            search.spec.describe(),
            search.mean_accuracy
        );
        let mut votes = Vec::with_capacity(folds.k);
        for fold in 0..folds.k {
            let sub = |idx: &[usize]| -> (Array2<f32>, Vec<ClassLabel>) {
                let x = Array2::from_shape_fn((idx.len(), train_x.ncols()), |(r, c)| {
                    train_x[[idx[r], c]]
                });
                (x, idx.iter().map(|&i| train_y[i]).collect())
            };
            let (fx, fy) = sub(&folds.train_indices(fold));
            let (ex, ey) = sub(&folds.eval_indices(fold));
            let model = train_classifier(&search.spec, &fx, &fy, seed.wrapping_add(fold as u64))?;
            let fold_metrics = compute_metrics(&model.predict(&ex)?, &ey)?;
            print_metrics(&format!("model classifier={kind} fold={fold}"), &fold_metrics);
            votes.push(model.predict(&eval_x)?);
        }
        let ensembled = compute_metrics(&majority_vote(&votes)?, &eval_y)?;
        print_metrics(&format!("ensembled classifier={kind}"), &ensembled);
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let path = config.ok_or_else(|| {
        Error::ConfigError("experiment requires --config <file>".into())
    })?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(workdir) = &args.workdir {
        config.workdir = workdir.clone();
    }
    let report = run_condition(&config)?;
    println!("seed={}", report.seed);
    if let Some(dim) = report.conditioning_dim {
        println!("conditioning-dim={dim}");
    }
    for outcome in &report.classifiers {
        print_metrics(&format!("ensembled classifier={}", outcome.kind), &outcome.ensembled);
    }
    println!("wrote {}", config.workdir.join("report.txt").display());
    Ok(())
}

fn cmd_plot(args: &PlotArgs, seed: u64) -> Result<()> {
    let container = TensorContainer::load(&args.embeddings)?;
    let name = if container.contains("embeddings") { "embeddings" } else { "features" };
    let embeddings: Array2<f32> = container
        .get(name)?
        .to_owned()
        .into_dimensionality()
        .map_err(|e| Error::ShapeError(e.to_string()))?;
    let labels: Option<Vec<usize>> = container
        .get("labels")
        .ok()
        .map(|t| t.iter().map(|&v| v as usize).collect());

    let coords = project_embeddings_2d(&embeddings, seed)?;
    let mut out = String::new();
    for i in 0..coords.nrows() {
        out.push_str(&format!("{:.6}\t{:.6}", coords[[i, 0]], coords[[i, 1]]));
        if let Some(labels) = &labels {
            out.push_str(&format!("\t{}", labels[i]));
        }
        out.push('\n');
    }
    std::fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
    println!("points={}", coords.nrows());
    println!("wrote {}", args.out.display());

    if let Some(svg_path) = &args.svg {
        let svg = render_scatter_svg(&coords, labels.as_deref());
        std::fs::write(svg_path, svg).map_err(|e| Error::io(svg_path, e))?;
        println!("wrote {}", svg_path.display());
    }
    Ok(())
}

/// Minimal SVG scatter: coordinates are already in [-1, 1].
fn render_scatter_svg(coords: &Array2<f32>, labels: Option<&[usize]>) -> String {
    const SIZE: f32 = 480.0;
    const MARGIN: f32 = 20.0;
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" \
         viewBox=\"0 0 {s} {s}\">\n<rect width=\"{s}\" height=\"{s}\" fill=\"white\"/>\n",
        s = SIZE
    );
    for i in 0..coords.nrows() {
        let x = MARGIN + (coords[[i, 0]] + 1.0) * 0.5 * (SIZE - 2.0 * MARGIN);
        let y = MARGIN + (1.0 - (coords[[i, 1]] + 1.0) * 0.5) * (SIZE - 2.0 * MARGIN);
        let color = labels
            .map(|l| palette[l[i] % palette.len()])
            .unwrap_or(palette[0]);
        svg.push_str(&format!(
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.7\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let report = parse_report(&args.path)?;
    println!("seed={}", report.seed);
    println!("eval-samples={}", report.eval_labels.len());
    if let Some(dim) = report.conditioning_dim {
        println!("conditioning-dim={dim}");
    }
    for (key, value) in &report.config_echo {
        println!("config.{key}={value}");
    }
    for outcome in &report.classifiers {
        println!("classifier={} spec=\"{}\"", outcome.kind, outcome.spec);
        let mean_fold = outcome.fold_metrics.iter().map(|m| m.accuracy).sum::<f64>()
            / outcome.fold_metrics.len() as f64;
        println!(
            "classifier={} folds={} mean-fold-accuracy={:.4}",
            outcome.kind,
            outcome.fold_metrics.len(),
            mean_fold
        );
        print_metrics(&format!("ensembled classifier={}", outcome.kind), &outcome.ensembled);
    }
    Ok(())
}
