//! Binary CN-vs-IM evaluation metrics with IM as the positive class.

use crate::error::{Error, Result};

/// Class labels: CN (control, negative) and IM (impaired, positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Cn,
    Im,
}

impl ClassLabel {
    pub fn index(self) -> usize {
        match self {
            Self::Cn => 0,
            Self::Im => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Self::Cn),
            1 => Ok(Self::Im),
            _ => Err(Error::ParseError {
                row: 0,
                message: format!("class index must be 0 or 1, got {i}"),
            }),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cn => "CN",
            Self::Im => "IM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CN" => Some(Self::Cn),
            "IM" => Some(Self::Im),
            _ => None,
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Confusion counts with IM = positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub specificity: f64,
    pub recall: f64,
    pub confusion: Confusion,
}

/// Metrics from explicit confusion counts. Denominators must be positive:
/// both classes must appear among the true labels.
pub fn metrics_from_confusion(confusion: Confusion) -> Result<Metrics> {
    let Confusion { tp, fp, tn, fn_ } = confusion;
    let positives = tp + fn_;
    let negatives = tn + fp;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels(
            "both classes must be present for specificity and recall".into(),
        ));
    }
    let total = (tp + fp + tn + fn_) as f64;
    Ok(Metrics {
        accuracy: (tp + tn) as f64 / total,
        f1: 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
        specificity: tn as f64 / negatives as f64,
        recall: tp as f64 / positives as f64,
        confusion,
    })
}

/// Positive-class (IM) metrics for a prediction run.
pub fn compute_metrics(predictions: &[ClassLabel], labels: &[ClassLabel]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeError(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("no labels to score".into()));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&p, &y) in predictions.iter().zip(labels.iter()) {
        match (y, p) {
            (ClassLabel::Im, ClassLabel::Im) => c.tp += 1,
            (ClassLabel::Cn, ClassLabel::Im) => c.fp += 1,
            (ClassLabel::Cn, ClassLabel::Cn) => c.tn += 1,
            (ClassLabel::Im, ClassLabel::Cn) => c.fn_ += 1,
        }
    }
    metrics_from_confusion(c)
}
