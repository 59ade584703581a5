//! Linear discriminant analysis with optional covariance shrinkage.

use ndarray::Array2;

use crate::error::{Error, Result};

use super::metrics::ClassLabel;

/// Fisher discriminant with a pooled, optionally shrunk covariance.
///
/// With shrinkage `s`, the covariance becomes
/// `(1 - s) * S + s * (tr(S) / d) * I`. Without shrinkage a tiny ridge of
/// the same form is still added so the solve stays well-posed when the
/// per-fold sample count is below the feature width.
#[derive(Debug, Clone)]
pub struct LdaModel {
    weights: Vec<f64>,
    bias: f64,
    dim: usize,
}

const RIDGE_EPS: f64 = 1e-6;

impl LdaModel {
    pub fn fit(
        features: &Array2<f32>,
        labels: &[ClassLabel],
        shrinkage: Option<f64>,
    ) -> Result<Self> {
        if let Some(s) = shrinkage {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::ConfigError(format!(
                    "shrinkage must lie in [0, 1], got {s}"
                )));
            }
        }
        let (n, d) = features.dim();

        // Class means.
        let mut mean = [vec![0.0f64; d], vec![0.0f64; d]];
        let mut count = [0usize; 2];
        for (i, label) in labels.iter().enumerate() {
            let k = label.index();
            count[k] += 1;
            for j in 0..d {
                mean[k][j] += features[[i, j]] as f64;
            }
        }
        for k in 0..2 {
            for j in 0..d {
                mean[k][j] /= count[k] as f64;
            }
        }

        // Pooled covariance of the centered data (population convention).
        let mut cov = vec![0.0f64; d * d];
        let mut centered = vec![0.0f64; d];
        for (i, label) in labels.iter().enumerate() {
            let k = label.index();
            for j in 0..d {
                centered[j] = features[[i, j]] as f64 - mean[k][j];
            }
            for a in 0..d {
                let ca = centered[a];
                for b in a..d {
                    cov[a * d + b] += ca * centered[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / n as f64;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }

        // Shrink toward a scaled identity (or apply the minimal ridge).
        let trace: f64 = (0..d).map(|a| cov[a * d + a]).sum();
        let iso = trace / d as f64;
        match shrinkage {
            Some(s) => {
                for a in 0..d {
                    for b in 0..d {
                        cov[a * d + b] *= 1.0 - s;
                    }
                    cov[a * d + a] += s * iso;
                }
            }
            None => {
                let ridge = RIDGE_EPS * (iso + RIDGE_EPS);
                for a in 0..d {
                    cov[a * d + a] += ridge;
                }
            }
        }

        // Solve cov * w = mu_im - mu_cn.
        let mut rhs: Vec<f64> = (0..d).map(|j| mean[1][j] - mean[0][j]).collect();
        let weights = solve_symmetric(&mut cov, &mut rhs, d)?;

        // Threshold at the midpoint between projected class means, adjusted
        // by the log prior ratio.
        let mut mid = 0.0;
        for j in 0..d {
            mid += weights[j] * (mean[0][j] + mean[1][j]) * 0.5;
        }
        let prior = (count[1] as f64 / count[0] as f64).ln();
        Ok(Self { weights, bias: prior - mid, dim: d })
    }

    pub fn predict(&self, features: &Array2<f32>) -> Result<Vec<ClassLabel>> {
        if features.ncols() != self.dim {
            return Err(Error::ShapeError(format!(
                "model expects width {}, got {}",
                self.dim,
                features.ncols()
            )));
        }
        Ok((0..features.nrows())
            .map(|i| {
                let mut score = self.bias;
                for j in 0..self.dim {
                    score += self.weights[j] * features[[i, j]] as f64;
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

/// Gaussian elimination with partial pivoting on a dense row-major matrix.
fn solve_symmetric(matrix: &mut [f64], rhs: &mut [f64], d: usize) -> Result<Vec<f64>> {
    for col in 0..d {
        let mut pivot = col;
        let mut best = matrix[col * d + col].abs();
        for row in (col + 1)..d {
            let v = matrix[row * d + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return Err(Error::DegenerateInput(
                "covariance matrix is numerically singular".into(),
            ));
        }
        if pivot != col {
            for j in 0..d {
                matrix.swap(col * d + j, pivot * d + j);
            }
            rhs.swap(col, pivot);
        }
        let diag = matrix[col * d + col];
        for row in (col + 1)..d {
            let factor = matrix[row * d + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..d {
                matrix[row * d + j] -= factor * matrix[col * d + j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut solution = vec![0.0f64; d];
    for col in (0..d).rev() {
        let mut acc = rhs[col];
        for j in (col + 1)..d {
            acc -= matrix[col * d + j] * solution[j];
        }
        solution[col] = acc / matrix[col * d + col];
    }
    Ok(solution)
}
