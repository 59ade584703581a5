//! Python bindings over the core pipeline. Everything crosses the boundary
//! as plain Python types (lists, tuples, dicts, strings, numbers) so the
//! module has no runtime dependency beyond the interpreter.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use voicesep::assessment::{
    majority_vote as vote_rs, metrics_from_confusion, pool_content_embedding,
    stratified_kfold as kfold_rs, stratified_split as split_rs, ClassLabel, Confusion, Metrics,
};
use voicesep::audio::{
    mel_spectrogram as mel_rs, read_wav as read_wav_rs, resample, trim_silence,
    write_wav as write_wav_rs, AudioSegment, MelConfig, VadConfig,
};
use voicesep::error::Error;
use voicesep::experiments::{
    augment_sessions, generate_synthetic_corpus, load_manifest, parse_report,
    project_embeddings_2d, run_condition, save_manifest, voiced_segment_rate, CorpusSpec,
    EvalReport, ExperimentConfig,
};
use voicesep::separator::ContentEmbedding;
use voicesep::speaker::{equal_error_rate as eer_rs, ge2e_loss, ge2e_similarity_matrix, Ge2eBatch};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: &[Vec<f32>], what: &str) -> PyResult<Array2<f32>> {
    let n = rows.len();
    let width = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err(format!("{what} rows have unequal widths")));
    }
    let flat: Vec<f32> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((n, width), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn labels_from_indices(indices: &[usize]) -> PyResult<Vec<ClassLabel>> {
    indices.iter().map(|&i| ClassLabel::from_index(i).map_err(err)).collect()
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("f1", m.f1)?;
    d.set_item("specificity", m.specificity)?;
    d.set_item("recall", m.recall)?;
    d.set_item("tp", m.confusion.tp)?;
    d.set_item("fp", m.confusion.fp)?;
    d.set_item("tn", m.confusion.tn)?;
    d.set_item("fn", m.confusion.fn_)?;
    Ok(d)
}

/// The four Table-2 metrics from a confusion matrix (IM is the positive
/// class). Returns a dict with accuracy, f1, specificity, recall, and the
/// echoed counts.
#[pyfunction]
#[pyo3(name = "metrics")]
fn metrics_py(py: Python<'_>, tp: usize, fp: usize, tn: usize, fn_: usize) -> PyResult<Py<PyDict>> {
    let m = metrics_from_confusion(Confusion { tp, fp, tn, fn_ }).map_err(err)?;
    Ok(metrics_dict(py, &m)?.into())
}

/// Reads a WAV file; returns (samples, sample_rate).
#[pyfunction]
fn read_wav(path: &str) -> PyResult<(Vec<f32>, u32)> {
    let audio = read_wav_rs(path).map_err(err)?;
    Ok((audio.samples, audio.sample_rate))
}

/// Writes float samples as a 16-bit PCM WAV file.
#[pyfunction]
fn write_wav(path: &str, samples: Vec<f32>, sample_rate: u32) -> PyResult<()> {
    write_wav_rs(path, &AudioSegment::new(samples, sample_rate)).map_err(err)
}

/// Log-mel features for `preset` in {"content", "speaker"}; returns a
/// [n_mels][frames] nested list. Input is resampled to 16 kHz first and
/// silence-trimmed unless `trim=False`.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, preset, trim = true))]
fn mel_spectrogram(
    samples: Vec<f32>,
    sample_rate: u32,
    preset: &str,
    trim: bool,
) -> PyResult<Vec<Vec<f32>>> {
    let config = match preset {
        "content" => MelConfig::content(),
        "speaker" => MelConfig::speaker(),
        other => {
            return Err(PyValueError::new_err(format!(
                "preset must be 'content' or 'speaker', got {other:?}"
            )))
        }
    };
    let audio = AudioSegment::new(samples, sample_rate);
    let audio = if sample_rate == 16_000 {
        audio
    } else {
        resample(&audio, 16_000).map_err(err)?
    };
    let audio = if trim {
        trim_silence(&audio, &VadConfig::default()).map_err(err)?
    } else {
        audio
    };
    let mel = mel_rs(&audio, &config, "py").map_err(err)?;
    Ok(mel.values.rows().into_iter().map(|r| r.to_vec()).collect())
}

/// Pools a 64-row content embedding into the flat 512-wide feature vector.
#[pyfunction]
fn pool_content(values: Vec<Vec<f32>>) -> PyResult<Vec<f32>> {
    let matrix = matrix_from_rows(&values, "content embedding")?;
    let emb = ContentEmbedding { values: matrix, source_id: "py".into() };
    Ok(pool_content_embedding(&emb).map_err(err)?.to_vec())
}

/// GE2E loss of an [S][U][D] embedding batch under similarity scaling
/// (w, b). Embeddings are used as given (callers normalize).
#[pyfunction]
#[pyo3(signature = (embeddings, w = 10.0, b = -5.0))]
fn ge2e(embeddings: Vec<Vec<Vec<f32>>>, w: f32, b: f32) -> PyResult<f32> {
    let s = embeddings.len();
    let u = embeddings.first().map_or(0, |sp| sp.len());
    let d = embeddings
        .first()
        .and_then(|sp| sp.first())
        .map_or(0, |e| e.len());
    let mut batch = Array3::<f32>::zeros((s, u, d));
    for (j, speaker) in embeddings.iter().enumerate() {
        if speaker.len() != u {
            return Err(PyValueError::new_err("ragged utterance counts"));
        }
        for (i, emb) in speaker.iter().enumerate() {
            if emb.len() != d {
                return Err(PyValueError::new_err("ragged embedding widths"));
            }
            for (c, &v) in emb.iter().enumerate() {
                batch[[j, i, c]] = v;
            }
        }
    }
    let batch = Ge2eBatch::new(batch).map_err(err)?;
    let sim = ge2e_similarity_matrix(&batch, w, b).map_err(err)?;
    Ok(ge2e_loss(&sim))
}

/// Equal error rate of verification trials given parallel score and
/// is-target lists.
#[pyfunction]
fn eer(scores: Vec<f32>, targets: Vec<bool>) -> PyResult<f32> {
    if scores.len() != targets.len() {
        return Err(PyValueError::new_err("scores and targets differ in length"));
    }
    let trials: Vec<(f32, bool)> = scores.into_iter().zip(targets).collect();
    eer_rs(&trials).map_err(err)
}

/// Stratified train/eval split over 0/1 class labels; returns
/// (train_indices, eval_indices).
#[pyfunction]
fn stratified_split(
    labels: Vec<usize>,
    eval_fraction: f64,
    seed: u64,
) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let labels = labels_from_indices(&labels)?;
    split_rs(&labels, eval_fraction, seed).map_err(err)
}

/// Stratified k-fold assignment over 0/1 class labels; returns the fold
/// index of every sample.
#[pyfunction]
fn stratified_kfold(labels: Vec<usize>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let labels = labels_from_indices(&labels)?;
    Ok(kfold_rs(&labels, k, seed).map_err(err)?.folds)
}

/// Majority vote across an odd number of per-model 0/1 prediction lists.
#[pyfunction]
fn majority_vote(predictions: Vec<Vec<usize>>) -> PyResult<Vec<usize>> {
    let predictions = predictions
        .iter()
        .map(|p| labels_from_indices(p))
        .collect::<PyResult<Vec<_>>>()?;
    let voted = vote_rs(&predictions).map_err(err)?;
    Ok(voted.into_iter().map(|l| l.index()).collect())
}

/// Projects an [N][D] embedding list to N (x, y) pairs in [-1, 1].
#[pyfunction]
fn project_2d(embeddings: Vec<Vec<f32>>, seed: u64) -> PyResult<Vec<(f32, f32)>> {
    let matrix = matrix_from_rows(&embeddings, "embedding")?;
    let coords = project_embeddings_2d(&matrix, seed).map_err(err)?;
    Ok((0..coords.nrows())
        .map(|i| (coords[[i, 0]], coords[[i, 1]]))
        .collect())
}

/// Syllable-rate estimate (bursts per second) of a mono 16 kHz signal —
/// the detector used to validate the synthetic corpus.
#[pyfunction]
fn speech_rate(samples: Vec<f32>, sample_rate: u32) -> PyResult<f64> {
    voiced_segment_rate(&samples, sample_rate).map_err(err)
}

/// Generates the synthetic corpus and writes its manifest CSV. Returns a
/// dict with records, speakers, cn, im.
#[pyfunction]
#[pyo3(signature = (out_dir, manifest_path, speakers, utterances, sessions = 1, classes = 2, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn gen_corpus(
    py: Python<'_>,
    out_dir: &str,
    manifest_path: &str,
    speakers: usize,
    utterances: usize,
    sessions: usize,
    classes: usize,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let spec = CorpusSpec {
        n_speakers: speakers,
        utterances_per_speaker: utterances,
        sessions_per_speaker: sessions,
        content_classes: classes,
        seed,
    };
    let manifest = generate_synthetic_corpus(&spec, out_dir).map_err(err)?;
    save_manifest(&manifest, manifest_path).map_err(err)?;
    let (cn, im) = manifest.class_counts();
    let d = PyDict::new(py);
    d.set_item("records", manifest.len())?;
    d.set_item("speakers", manifest.base_speaker_count())?;
    d.set_item("cn", cn)?;
    d.set_item("im", im)?;
    Ok(d.into())
}

/// Applies session augmentation to a manifest CSV; returns
/// (records, cn, im) after augmentation.
#[pyfunction]
fn augment_manifest(in_path: &str, out_path: &str) -> PyResult<(usize, usize, usize)> {
    let manifest = load_manifest(in_path).map_err(err)?;
    let augmented = augment_sessions(&manifest).map_err(err)?;
    save_manifest(&augmented, out_path).map_err(err)?;
    let (cn, im) = augmented.class_counts();
    Ok((augmented.len(), cn, im))
}

fn report_dict(py: Python<'_>, report: &EvalReport) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", report.seed)?;
    d.set_item("conditioning_dim", report.conditioning_dim)?;
    d.set_item(
        "eval_labels",
        report.eval_labels.iter().map(|l| l.index()).collect::<Vec<_>>(),
    )?;
    let classifiers = PyDict::new(py);
    for outcome in &report.classifiers {
        let entry = PyDict::new(py);
        entry.set_item("spec", &outcome.spec)?;
        entry.set_item("ensembled", metrics_dict(py, &outcome.ensembled)?)?;
        let folds: Vec<Bound<'_, PyDict>> = outcome
            .fold_metrics
            .iter()
            .map(|m| metrics_dict(py, m))
            .collect::<PyResult<_>>()?;
        entry.set_item("folds", folds)?;
        classifiers.set_item(outcome.kind.as_str(), entry)?;
    }
    d.set_item("classifiers", classifiers)?;
    Ok(d.into())
}

/// Runs one experiment condition from a flat key=value config file and
/// returns the evaluation report as nested dicts.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_path: &str) -> PyResult<Py<PyDict>> {
    let config = ExperimentConfig::load(config_path).map_err(err)?;
    let report = run_condition(&config).map_err(err)?;
    report_dict(py, &report)
}

/// Parses and validates a persisted evaluation report.
#[pyfunction]
fn load_report(py: Python<'_>, path: &str) -> PyResult<Py<PyDict>> {
    let report = parse_report(path).map_err(err)?;
    report_dict(py, &report)
}

/// Cosine similarities between two embedding lists (used for quick
/// verification-trial scoring from Python).
#[pyfunction]
fn cosine_scores(a: Vec<Vec<f32>>, b: Vec<Vec<f32>>) -> PyResult<Vec<f32>> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("embedding lists differ in length"));
    }
    let mut out = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(&b) {
        if x.len() != y.len() {
            return Err(PyValueError::new_err("embedding widths differ"));
        }
        let xv = Array1::from_vec(x.clone());
        let yv = Array1::from_vec(y.clone());
        let nx = xv.dot(&xv).sqrt();
        let ny = yv.dot(&yv).sqrt();
        if nx == 0.0 || ny == 0.0 {
            return Err(PyValueError::new_err("zero-norm embedding"));
        }
        out.push(xv.dot(&yv) / (nx * ny));
    }
    Ok(out)
}

/// Maps each distinct speaker key to its one-hot identity code, mirroring
/// the one-hot conditioning ablation.
#[pyfunction]
fn one_hot_codes(keys: Vec<String>) -> PyResult<BTreeMap<String, Vec<f32>>> {
    let mut sorted = keys.clone();
    sorted.sort();
    sorted.dedup();
    let n = sorted.len();
    let mut out = BTreeMap::new();
    for (i, key) in sorted.into_iter().enumerate() {
        let mut code = vec![0.0f32; n];
        code[i] = 1.0;
        out.insert(key, code);
    }
    Ok(out)
}

#[pymodule]
fn voicesep_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(metrics_py, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    m.add_function(wrap_pyfunction!(mel_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(pool_content, m)?)?;
    m.add_function(wrap_pyfunction!(ge2e, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_kfold, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(project_2d, m)?)?;
    m.add_function(wrap_pyfunction!(speech_rate, m)?)?;
    m.add_function(wrap_pyfunction!(gen_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(augment_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(load_report, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_scores, m)?)?;
    m.add_function(wrap_pyfunction!(one_hot_codes, m)?)?;
    Ok(())
}
