//! Evaluation reports: per-classifier per-fold metrics, the ensembled
//! prediction, a config echo, and the seed record, in a line-oriented
//! `key=value` text format that parses back losslessly.

use std::path::Path;

use crate::assessment::{
    compute_metrics, metrics_from_confusion, ClassLabel, ClassifierKind, Confusion, Metrics,
};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "eval-report-v1";

/// One classifier family's results inside a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutcome {
    pub kind: ClassifierKind,
    /// The winning hyperparameter description (`ClassifierSpec::describe`).
    pub spec: String,
    /// Exactly k entries, one per fold model scored on its held-out fold.
    pub fold_metrics: Vec<Metrics>,
    /// Majority vote of the k fold models on the held-out evaluation set.
    pub ensembled: Metrics,
    pub ensembled_predictions: Vec<ClassLabel>,
}

/// A full evaluation run: configuration echo, seed, and every classifier's
/// fold-level and ensembled outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Unix seconds at emission; excluded from [`EvalReport::content_eq`].
    pub timestamp: u64,
    pub seed: u64,
    /// Width of the separator conditioning vector, when one was used.
    pub conditioning_dim: Option<usize>,
    /// Flat echo of the experiment configuration, in emission order.
    pub config_echo: Vec<(String, String)>,
    /// True labels of the held-out evaluation set, in prediction order.
    pub eval_labels: Vec<ClassLabel>,
    pub classifiers: Vec<ClassifierOutcome>,
}

impl EvalReport {
    /// Equality modulo the timestamp.
    pub fn content_eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.conditioning_dim == other.conditioning_dim
            && self.config_echo == other.config_echo
            && self.eval_labels == other.eval_labels
            && self.classifiers == other.classifiers
    }

    fn validate(&self) -> Result<()> {
        for c in &self.classifiers {
            if c.ensembled_predictions.len() != self.eval_labels.len() {
                return Err(Error::ShapeError(format!(
                    "{} stored {} predictions for {} eval labels",
                    c.kind,
                    c.ensembled_predictions.len(),
                    self.eval_labels.len()
                )));
            }
            let recomputed = compute_metrics(&c.ensembled_predictions, &self.eval_labels)?;
            if recomputed.confusion != c.ensembled.confusion {
                return Err(Error::ShapeError(format!(
                    "{} ensembled metrics disagree with stored predictions",
                    c.kind
                )));
            }
        }
        Ok(())
    }
}

fn labels_to_csv(labels: &[ClassLabel]) -> String {
    labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(",")
}

fn labels_from_csv(s: &str) -> Result<Vec<ClassLabel>> {
    s.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            ClassLabel::parse(p).ok_or_else(|| Error::ParseError {
                row: 0,
                message: format!("bad class label {p:?}"),
            })
        })
        .collect()
}

fn confusion_line(c: Confusion) -> String {
    format!("{},{},{},{}", c.tp, c.fp, c.tn, c.fn_)
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "accuracy={:.4} f1={:.4} specificity={:.4} recall={:.4}",
        m.accuracy, m.f1, m.specificity, m.recall
    )
}

fn parse_confusion(value: &str, line_no: usize) -> Result<Metrics> {
    let parts: Vec<&str> = value.split(',').collect();
    let bad = |message: String| Error::ParseError { row: line_no, message };
    if parts.len() != 4 {
        return Err(bad(format!("expected tp,fp,tn,fn, got {value:?}")));
    }
    let mut nums = [0usize; 4];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad count {part:?}")))?;
    }
    metrics_from_confusion(Confusion {
        tp: nums[0],
        fp: nums[1],
        tn: nums[2],
        fn_: nums[3],
    })
}

/// Writes the report. The derived metric lines are for human readers; the
/// confusion lines are what [`parse_report`] trusts.
pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    report.validate()?;
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("format={FORMAT_TAG}\n"));
    out.push_str(&format!("timestamp={}\n", report.timestamp));
    out.push_str(&format!("seed={}\n", report.seed));
    if let Some(dim) = report.conditioning_dim {
        out.push_str(&format!("conditioning-dim={dim}\n"));
    }
    for (k, v) in &report.config_echo {
        out.push_str(&format!("config.{k}={v}\n"));
    }
    out.push_str(&format!("eval-labels={}\n", labels_to_csv(&report.eval_labels)));
    for c in &report.classifiers {
        out.push_str(&format!("classifier={}\n", c.kind));
        out.push_str(&format!("classifier.spec={}\n", c.spec));
        for (i, m) in c.fold_metrics.iter().enumerate() {
            out.push_str(&format!(
                "classifier.fold.{i}.confusion={}\n",
                confusion_line(m.confusion)
            ));
            out.push_str(&format!("classifier.fold.{i}.metrics={}\n", metrics_line(m)));
        }
        out.push_str(&format!(
            "classifier.ensembled.confusion={}\n",
            confusion_line(c.ensembled.confusion)
        ));
        out.push_str(&format!(
            "classifier.ensembled.metrics={}\n",
            metrics_line(&c.ensembled)
        ));
        out.push_str(&format!(
            "classifier.predictions={}\n",
            labels_to_csv(&c.ensembled_predictions)
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a report back; derived metrics are recomputed from the stored
/// confusion counts, so write -> read round-trips to an equal value.
pub fn parse_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    let mut timestamp = None;
    let mut seed = None;
    let mut conditioning_dim = None;
    let mut config_echo = Vec::new();
    let mut eval_labels = Vec::new();
    let mut classifiers: Vec<ClassifierOutcome> = Vec::new();
    let mut saw_tag = false;

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |message: String| Error::ParseError { row: line_no, message };
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
        match key {
            "format" => {
                if value != FORMAT_TAG {
                    return Err(bad(format!("unknown format {value:?}")));
                }
                saw_tag = true;
            }
            "timestamp" => {
                timestamp =
                    Some(value.parse().map_err(|_| bad(format!("bad timestamp {value:?}")))?)
            }
            "seed" => {
                seed = Some(value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?)
            }
            "conditioning-dim" => {
                conditioning_dim =
                    Some(value.parse().map_err(|_| bad(format!("bad dim {value:?}")))?)
            }
            "eval-labels" => eval_labels = labels_from_csv(value)?,
            "classifier" => {
                let kind = ClassifierKind::parse(value)
                    .ok_or_else(|| bad(format!("unknown classifier {value:?}")))?;
                classifiers.push(ClassifierOutcome {
                    kind,
                    spec: String::new(),
                    fold_metrics: Vec::new(),
                    ensembled: metrics_from_confusion(Confusion {
                        tp: 1,
                        fp: 0,
                        tn: 1,
                        fn_: 0,
                    })?,
                    ensembled_predictions: Vec::new(),
                });
            }
            _ if key.starts_with("config.") => {
                config_echo.push((key["config.".len()..].to_string(), value.to_string()));
            }
            _ if key.starts_with("classifier.") => {
                let current = classifiers
                    .last_mut()
                    .ok_or_else(|| bad("classifier field before any classifier".into()))?;
                let sub = &key["classifier.".len()..];
                if sub == "spec" {
                    current.spec = value.to_string();
                } else if sub == "predictions" {
                    current.ensembled_predictions = labels_from_csv(value)?;
                } else if sub == "ensembled.confusion" {
                    current.ensembled = parse_confusion(value, line_no)?;
                } else if sub == "ensembled.metrics" {
                    // Display-only; recomputed from the confusion.
                } else if let Some(rest) = sub.strip_prefix("fold.") {
                    if let Some(idx) = rest.strip_suffix(".confusion") {
                        let idx: usize = idx
                            .parse()
                            .map_err(|_| bad(format!("bad fold index in {key:?}")))?;
                        if idx != current.fold_metrics.len() {
                            return Err(bad(format!(
                                "fold {idx} out of order (expected {})",
                                current.fold_metrics.len()
                            )));
                        }
                        current.fold_metrics.push(parse_confusion(value, line_no)?);
                    } else if !rest.ends_with(".metrics") {
                        return Err(bad(format!("unknown field {key:?}")));
                    }
                } else {
                    return Err(bad(format!("unknown field {key:?}")));
                }
            }
            _ => {
                return Err(bad(format!("unknown field {key:?}")));
            }
        }
    }

    if !saw_tag {
        return Err(Error::ParseError {
            row: 0,
            message: "missing format tag".into(),
        });
    }
    let report = EvalReport {
        timestamp: timestamp.ok_or(Error::ParseError {
            row: 0,
            message: "missing timestamp".into(),
        })?,
        seed: seed.ok_or(Error::ParseError { row: 0, message: "missing seed".into() })?,
        conditioning_dim,
        config_echo,
        eval_labels,
        classifiers,
    };
    report.validate()?;
    Ok(report)
}

/// Current time as unix seconds, for report stamping.
pub fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
