//! Soft-margin support vector machine trained with simplified SMO.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::classifiers::{Scaler, SvmKernel};
use super::metrics::ClassLabel;

const TOL: f64 = 1e-3;
const ALPHA_TOL: f64 = 1e-7;
const SUPPORT_TOL: f64 = 1e-8;
const MAX_QUIET_PASSES: usize = 5;
const MAX_TOTAL_PASSES: usize = 400;

/// A fitted SVM: retained support vectors with their signed coefficients.
#[derive(Debug, Clone)]
pub struct SvmModel {
    kernel: SvmKernel,
    support: Array2<f64>,
    coeffs: Vec<f64>,
    bias: f64,
    scaler: Scaler,
    dim: usize,
}

impl SvmModel {
    pub fn fit(
        features: &Array2<f32>,
        labels: &[ClassLabel],
        c: f64,
        kernel: SvmKernel,
        seed: u64,
    ) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::ConfigError(format!("C must be positive, got {c}")));
        }
        if let SvmKernel::Rbf { gamma } = kernel {
            if gamma <= 0.0 {
                return Err(Error::ConfigError(format!(
                    "gamma must be positive, got {gamma}"
                )));
            }
        }
        let n = features.nrows();
        let d = features.ncols();
        let scaler = Scaler::fit(features);
        let scaled = scaler.transform(features);
        let x = scaled.mapv(|v| v as f64);
        let y: Vec<f64> = labels
            .iter()
            .map(|l| if *l == ClassLabel::Im { 1.0 } else { -1.0 })
            .collect();

        // Dense kernel matrix; fold counts stay in the hundreds.
        let mut k = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = kernel_value(kernel, &row(&x, i), &row(&x, j));
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
        }

        let (alphas, bias) = smo(&k, &y, c, seed);

        // Keep only the support vectors.
        let kept: Vec<usize> = (0..n).filter(|&i| alphas[i] > SUPPORT_TOL).collect();
        let mut support = Array2::<f64>::zeros((kept.len(), d));
        let mut coeffs = Vec::with_capacity(kept.len());
        for (r, &i) in kept.iter().enumerate() {
            for j in 0..d {
                support[[r, j]] = x[[i, j]];
            }
            coeffs.push(alphas[i] * y[i]);
        }
        Ok(Self { kernel, support, coeffs, bias, scaler, dim: d })
    }

    pub fn predict(&self, features: &Array2<f32>) -> Result<Vec<ClassLabel>> {
        if features.ncols() != self.dim {
            return Err(Error::ShapeError(format!(
                "model expects width {}, got {}",
                self.dim,
                features.ncols()
            )));
        }
        let scaled = self.scaler.transform(features);
        let x = scaled.mapv(|v| v as f64);
        Ok((0..x.nrows())
            .map(|i| {
                let probe = row(&x, i);
                let mut score = self.bias;
                for (r, coeff) in self.coeffs.iter().enumerate() {
                    score += coeff * kernel_value(self.kernel, &row(&self.support, r), &probe);
                }
                if score > 0.0 {
                    ClassLabel::Im
                } else {
                    ClassLabel::Cn
                }
            })
            .collect())
    }
}

fn row<'a>(x: &'a Array2<f64>, i: usize) -> ndarray::ArrayView1<'a, f64> {
    x.row(i)
}

fn kernel_value(
    kernel: SvmKernel,
    a: &ndarray::ArrayView1<'_, f64>,
    b: &ndarray::ArrayView1<'_, f64>,
) -> f64 {
    match kernel {
        SvmKernel::Linear => a.dot(b),
        SvmKernel::Rbf { gamma } => {
            let mut dist = 0.0;
            for (av, bv) in a.iter().zip(b.iter()) {
                let diff = av - bv;
                dist += diff * diff;
            }
            (-gamma * dist).exp()
        }
    }
}

/// Simplified sequential minimal optimization: sweep all rows, pairing each
/// KKT violator with a random partner, until a few quiet passes in a row
/// (or the hard pass cap) ends the run.
fn smo(k: &Array2<f64>, y: &[f64], c: f64, seed: u64) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut alphas = vec![0.0f64; n];
    let mut b = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let decision = |alphas: &[f64], b: f64, i: usize| -> f64 {
        let mut acc = b;
        for j in 0..n {
            if alphas[j] != 0.0 {
                acc += alphas[j] * y[j] * k[[j, i]];
            }
        }
        acc
    };

    let mut quiet = 0usize;
    let mut passes = 0usize;
    while quiet < MAX_QUIET_PASSES && passes < MAX_TOTAL_PASSES {
        let mut changed = 0usize;
        for i in 0..n {
            let e_i = decision(&alphas, b, i) - y[i];
            let violates = (y[i] * e_i < -TOL && alphas[i] < c)
                || (y[i] * e_i > TOL && alphas[i] > 0.0);
            if !violates {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let e_j = decision(&alphas, b, j) - y[j];
            let (a_i_old, a_j_old) = (alphas[i], alphas[j]);
            let (lo, hi) = if y[i] != y[j] {
                ((a_j_old - a_i_old).max(0.0), (c + a_j_old - a_i_old).min(c))
            } else {
                ((a_i_old + a_j_old - c).max(0.0), (a_i_old + a_j_old).min(c))
            };
            if lo >= hi {
                continue;
            }
            let eta = 2.0 * k[[i, j]] - k[[i, i]] - k[[j, j]];
            if eta >= 0.0 {
                continue;
            }
            let mut a_j = a_j_old - y[j] * (e_i - e_j) / eta;
            a_j = a_j.clamp(lo, hi);
            if (a_j - a_j_old).abs() < ALPHA_TOL {
                continue;
            }
            let a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j);
            alphas[i] = a_i;
            alphas[j] = a_j;

            let b1 = b - e_i
                - y[i] * (a_i - a_i_old) * k[[i, i]]
                - y[j] * (a_j - a_j_old) * k[[i, j]];
            let b2 = b - e_j
                - y[i] * (a_i - a_i_old) * k[[i, j]]
                - y[j] * (a_j - a_j_old) * k[[j, j]];
            b = if a_i > 0.0 && a_i < c {
                b1
            } else if a_j > 0.0 && a_j < c {
                b2
            } else {
                (b1 + b2) * 0.5
            };
            changed += 1;
        }
        quiet = if changed == 0 { quiet + 1 } else { 0 };
        passes += 1;
    }
    (alphas, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_margin_two_points_recovers_midpoint_boundary() {
        // One point per side, huge C: the boundary must bisect the pair.
        let x = ndarray::array![[-1.0f32, 0.0], [-1.2, 0.1], [1.0, 0.0], [1.3, -0.1]];
        let y = vec![ClassLabel::Cn, ClassLabel::Cn, ClassLabel::Im, ClassLabel::Im];
        let model = SvmModel::fit(&x, &y, 1e4, SvmKernel::Linear, 7).unwrap();
        let probe = ndarray::array![[-0.4f32, 0.0], [0.4, 0.0]];
        assert_eq!(
            model.predict(&probe).unwrap(),
            vec![ClassLabel::Cn, ClassLabel::Im]
        );
    }

    #[test]
    fn duplicated_interior_points_become_non_support() {
        // Points far inside their class region get alpha = 0 and are dropped.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..8 {
            rows.push([-3.0 - 0.1 * i as f32, 0.0]);
            y.push(ClassLabel::Cn);
            rows.push([3.0 + 0.1 * i as f32, 0.0]);
            y.push(ClassLabel::Im);
        }
        rows.push([-0.5, 0.0]);
        y.push(ClassLabel::Cn);
        rows.push([0.5, 0.0]);
        y.push(ClassLabel::Im);
        let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        let model = SvmModel::fit(&x, &y, 100.0, SvmKernel::Linear, 3).unwrap();
        assert!(
            model.support.nrows() < rows.len() / 2,
            "expected most interior points pruned, kept {}",
            model.support.nrows()
        );
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let x = ndarray::array![[0.0f32, 0.0], [0.1, 0.0], [1.0, 0.0], [1.1, 0.0]];
        let y = vec![ClassLabel::Cn, ClassLabel::Cn, ClassLabel::Im, ClassLabel::Im];
        assert!(matches!(
            SvmModel::fit(&x, &y, 0.0, SvmKernel::Linear, 1),
            Err(Error::ConfigError(_))
        ));
        assert!(matches!(
            SvmModel::fit(&x, &y, 1.0, SvmKernel::Rbf { gamma: -1.0 }, 1),
            Err(Error::ConfigError(_))
        ));
    }

    #[test]
    fn same_seed_reproduces_identical_models() {
        let x = ndarray::array![
            [0.0f32, 1.0],
            [0.3, 0.8],
            [0.1, 1.2],
            [2.0, -1.0],
            [2.2, -0.7],
            [1.9, -1.3]
        ];
        let y = vec![
            ClassLabel::Cn,
            ClassLabel::Cn,
            ClassLabel::Cn,
            ClassLabel::Im,
            ClassLabel::Im,
            ClassLabel::Im,
        ];
        let a = SvmModel::fit(&x, &y, 2.0, SvmKernel::Rbf { gamma: 0.7 }, 11).unwrap();
        let b = SvmModel::fit(&x, &y, 2.0, SvmKernel::Rbf { gamma: 0.7 }, 11).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
        assert_eq!(a.bias, b.bias);
    }
}
