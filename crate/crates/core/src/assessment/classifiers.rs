//! The five classifier families and their shared training interface.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::graph::Graph;
use crate::nn::layers::{cross_entropy_mean, one_hot};
use crate::nn::params::{uniform_init, zeros, Binder, Params};

use super::lda::LdaModel;
use super::metrics::ClassLabel;
use super::svm::SvmModel;
use super::trees::{ForestModel, TreeModel};

/// Default learning rate of the linear head.
pub const LINEAR_HEAD_LR: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvmKernel {
    Linear,
    Rbf { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    Sqrt,
    Log2,
}

/// Classifier family selector (CLI-facing).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Lda,
    Svm,
    Dt,
    Rf,
    LinearHead,
}

impl ClassifierKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lda" => Some(Self::Lda),
            "svm" => Some(Self::Svm),
            "dt" => Some(Self::Dt),
            "rf" => Some(Self::Rf),
            "linear-head" => Some(Self::LinearHead),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lda => "lda",
            Self::Svm => "svm",
            Self::Dt => "dt",
            Self::Rf => "rf",
            Self::LinearHead => "linear-head",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A concrete hyperparameter assignment for one family.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    Lda { shrinkage: Option<f64> },
    Svm { c: f64, kernel: SvmKernel },
    Dt { max_depth: usize, min_leaf: usize },
    Rf { trees: usize, max_depth: usize, max_features: MaxFeatures },
    LinearHead { lr: f64, weight_decay: f64 },
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Self::Lda { .. } => ClassifierKind::Lda,
            Self::Svm { .. } => ClassifierKind::Svm,
            Self::Dt { .. } => ClassifierKind::Dt,
            Self::Rf { .. } => ClassifierKind::Rf,
            Self::LinearHead { .. } => ClassifierKind::LinearHead,
        }
    }

    /// Family defaults used when no search has run.
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Lda => Self::Lda { shrinkage: Some(0.1) },
            ClassifierKind::Svm => Self::Svm { c: 1.0, kernel: SvmKernel::Linear },
            ClassifierKind::Dt => Self::Dt { max_depth: 6, min_leaf: 2 },
            ClassifierKind::Rf => Self::Rf {
                trees: 100,
                max_depth: 8,
                max_features: MaxFeatures::Sqrt,
            },
            ClassifierKind::LinearHead => Self::LinearHead {
                lr: LINEAR_HEAD_LR,
                weight_decay: 1e-4,
            },
        }
    }

    /// Flat key=value rendering for reports.
    pub fn describe(&self) -> String {
        match self {
            Self::Lda { shrinkage } => match shrinkage {
                Some(s) => format!("kind=lda shrinkage={s:.6}"),
                None => "kind=lda shrinkage=none".to_string(),
            },
            Self::Svm { c, kernel } => match kernel {
                SvmKernel::Linear => format!("kind=svm c={c:.6} kernel=linear"),
                SvmKernel::Rbf { gamma } => {
                    format!("kind=svm c={c:.6} kernel=rbf gamma={gamma:.6}")
                }
            },
            Self::Dt { max_depth, min_leaf } => {
                format!("kind=dt max_depth={max_depth} min_leaf={min_leaf}")
            }
            Self::Rf { trees, max_depth, max_features } => format!(
                "kind=rf trees={trees} max_depth={max_depth} max_features={}",
                match max_features {
                    MaxFeatures::Sqrt => "sqrt",
                    MaxFeatures::Log2 => "log2",
                }
            ),
            Self::LinearHead { lr, weight_decay } => {
                format!("kind=linear-head lr={lr:.6} weight_decay={weight_decay:.8}")
            }
        }
    }
}

/// A fitted model of any family.
#[derive(Debug, Clone)]
pub enum ClassifierModel {
    Lda(LdaModel),
    Svm(SvmModel),
    Dt(TreeModel),
    Rf(ForestModel),
    LinearHead(LinearHeadModel),
}

impl ClassifierModel {
    pub fn predict(&self, features: &Array2<f32>) -> Result<Vec<ClassLabel>> {
        match self {
            Self::Lda(m) => m.predict(features),
            Self::Svm(m) => m.predict(features),
            Self::Dt(m) => m.predict(features),
            Self::Rf(m) => m.predict(features),
            Self::LinearHead(m) => m.predict(features),
        }
    }
}

/// Checks the shared preconditions: matching lengths, non-empty width, and
/// at least two samples per class.
pub(super) fn validate_training_input(
    features: &Array2<f32>,
    labels: &[ClassLabel],
) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(Error::ShapeError(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if features.ncols() == 0 {
        return Err(Error::ShapeError("features have zero width".into()));
    }
    let im = labels.iter().filter(|&&l| l == ClassLabel::Im).count();
    let cn = labels.len() - im;
    if im < 2 || cn < 2 {
        return Err(Error::DegenerateLabels(format!(
            "need >= 2 samples per class, have CN={cn} IM={im}"
        )));
    }
    Ok(())
}

/// Trains one classifier. All stochastic families draw exclusively from
/// `seed`, so identical calls give identical models.
pub fn train_classifier(
    spec: &ClassifierSpec,
    features: &Array2<f32>,
    labels: &[ClassLabel],
    seed: u64,
) -> Result<ClassifierModel> {
    validate_training_input(features, labels)?;
    Ok(match spec {
        ClassifierSpec::Lda { shrinkage } => {
            ClassifierModel::Lda(LdaModel::fit(features, labels, *shrinkage)?)
        }
        ClassifierSpec::Svm { c, kernel } => {
            ClassifierModel::Svm(SvmModel::fit(features, labels, *c, *kernel, seed)?)
        }
        ClassifierSpec::Dt { max_depth, min_leaf } => {
            ClassifierModel::Dt(TreeModel::fit(features, labels, *max_depth, *min_leaf)?)
        }
        ClassifierSpec::Rf { trees, max_depth, max_features } => ClassifierModel::Rf(
            ForestModel::fit(features, labels, *trees, *max_depth, *max_features, seed)?,
        ),
        ClassifierSpec::LinearHead { lr, weight_decay } => ClassifierModel::LinearHead(
            LinearHeadModel::fit(features, labels, *lr, *weight_decay, seed)?,
        ),
    })
}

// ------------------------------------------------------------ linear head --

/// Column scaler fitted on training features (mean/std standardization).
#[derive(Debug, Clone)]
pub(super) struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(features: &Array2<f32>) -> Self {
        let (n, d) = features.dim();
        let mut mean = vec![0.0f64; d];
        let mut std = vec![0.0f64; d];
        for j in 0..d {
            let mut m = 0.0;
            for i in 0..n {
                m += features[[i, j]] as f64;
            }
            m /= n as f64;
            let mut v = 0.0;
            for i in 0..n {
                let diff = features[[i, j]] as f64 - m;
                v += diff * diff;
            }
            mean[j] = m;
            std[j] = (v / n as f64).sqrt().max(1e-8);
        }
        Self { mean, std }
    }

    pub fn transform(&self, features: &Array2<f32>) -> Array2<f32> {
        Array2::from_shape_fn(features.dim(), |(i, j)| {
            ((features[[i, j]] as f64 - self.mean[j]) / self.std[j]) as f32
        })
    }
}

/// A single linear layer to two logits, trained full-batch with an adaptive
/// momentum optimizer (lr 0.004 by default) plus L2 weight decay, on
/// standardized features.
#[derive(Debug, Clone)]
pub struct LinearHeadModel {
    scaler: Scaler,
    params: Params,
    dim: usize,
}

const LINEAR_HEAD_STEPS: usize = 200;

impl LinearHeadModel {
    pub fn fit(
        features: &Array2<f32>,
        labels: &[ClassLabel],
        lr: f64,
        weight_decay: f64,
        seed: u64,
    ) -> Result<Self> {
        let d = features.ncols();
        let scaler = Scaler::fit(features);
        let x = scaler.transform(features);
        let targets = one_hot(
            &labels.iter().map(|l| l.index()).collect::<Vec<_>>(),
            2,
        );

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        params.insert("w", uniform_init(&mut rng, &[d, 2], d));
        params.insert("b", zeros(&[1, 2]));
        let mut opt = Adam::new(AdamConfig::with_lr(lr as f32));

        for _ in 0..LINEAR_HEAD_STEPS {
            let mut g = Graph::new();
            let mut binder = Binder::new(&params);
            let xv = g.input(x.to_owned().into_dyn());
            let w = binder.get(&mut g, "w")?;
            let b = binder.get(&mut g, "b")?;
            let xw = g.matmul(xv, w);
            let logits = g.add(xw, b);
            let tv = g.input(targets.to_owned().into_dyn());
            let loss = cross_entropy_mean(&mut g, logits, tv);
            g.backward(loss);
            let mut grads = binder.grads(&g);
            // L2 weight decay on the weight matrix only.
            let wd = weight_decay as f32;
            if let Some(gw) = grads.get_mut("w") {
                let w_now = params.get("w")?;
                for (gv, wv) in gw.iter_mut().zip(w_now.iter()) {
                    *gv += wd * wv;
                }
            }
            opt.step(&mut params, &grads);
        }
        Ok(Self { scaler, params, dim: d })
    }

    pub fn predict(&self, features: &Array2<f32>) -> Result<Vec<ClassLabel>> {
        if features.ncols() != self.dim {
            return Err(Error::ShapeError(format!(
                "model expects width {}, got {}",
                self.dim,
                features.ncols()
            )));
        }
        let x = self.scaler.transform(features);
        let w = self.params.get("w")?;
        let b = self.params.get("b")?;
        Ok((0..x.nrows())
            .map(|i| {
                let mut logits = [b[[0, 0]] as f64, b[[0, 1]] as f64];
                for j in 0..self.dim {
                    let xv = x[[i, j]] as f64;
                    logits[0] += xv * w[[j, 0]] as f64;
                    logits[1] += xv * w[[j, 1]] as f64;
                }
                if logits[1] > logits[0] {
                    ClassLabel::Im
                } else {
                    ClassLabel::Cn
                }
            })
            .collect())
    }
}

#[cfg(test)]
pub(super) mod test_data {
    use super::*;

    /// Linearly separable 2-D blobs: CN around (-2, -2), IM around (2, 2).
    pub fn separable_blobs(n_per_class: usize) -> (Array2<f32>, Vec<ClassLabel>) {
        let mut state = 3u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(53);
            (((state >> 33) as f32 / (1u64 << 31) as f32) - 1.0) * 0.5
        };
        let n = 2 * n_per_class;
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let center = if class == 0 { -2.0 } else { 2.0 };
            x[[i, 0]] = center + next();
            x[[i, 1]] = center + next();
            y.push(if class == 0 { ClassLabel::Cn } else { ClassLabel::Im });
        }
        (x, y)
    }

    /// Concentric rings: CN inside radius 1, IM in an annulus at radius ~3.
    pub fn rings(n_per_class: usize) -> (Array2<f32>, Vec<ClassLabel>) {
        let n = 2 * n_per_class;
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let angle = (i as f32) * 0.71;
            let radius = if class == 0 { 0.5 + 0.3 * (i as f32 * 0.37).sin() } else { 3.0 };
            x[[i, 0]] = radius * angle.cos();
            x[[i, 1]] = radius * angle.sin();
            y.push(if class == 0 { ClassLabel::Cn } else { ClassLabel::Im });
        }
        (x, y)
    }

    pub fn accuracy(model: &ClassifierModel, x: &Array2<f32>, y: &[ClassLabel]) -> f64 {
        let preds = model.predict(x).unwrap();
        let hits = preds.iter().zip(y.iter()).filter(|(p, t)| p == t).count();
        hits as f64 / y.len() as f64
    }
}
