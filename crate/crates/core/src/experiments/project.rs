//! 2-D embedding projection for cluster plots: principal components via
//! seeded power iteration, scaled to the unit square.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const POWER_ITERATIONS: usize = 300;

/// Projects each row of `embeddings` to a 2-D point along the top two
/// principal axes, then rescales both coordinates into [-1, 1]. The power
/// iteration starts from a seeded vector, so the output is deterministic.
pub fn project_embeddings_2d(embeddings: &Array2<f32>, seed: u64) -> Result<Array2<f32>> {
    let (n, d) = embeddings.dim();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "projection needs at least 2 embeddings, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::DegenerateInput("embeddings have zero width".into()));
    }

    // Center columns in f64.
    let mut x = Array2::<f64>::zeros((n, d));
    for j in 0..d {
        let mut mean = 0.0;
        for i in 0..n {
            mean += embeddings[[i, j]] as f64;
        }
        mean /= n as f64;
        for i in 0..n {
            x[[i, j]] = embeddings[[i, j]] as f64 - mean;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axes: Vec<Array1<f64>> = Vec::new();
    for _ in 0..2.min(d) {
        let mut v = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0f64));
        normalize(&mut v);
        for _ in 0..POWER_ITERATIONS {
            // w = X^T (X v), with v kept orthogonal to found axes.
            let xv = x.dot(&v);
            let mut w = x.t().dot(&xv);
            for axis in &axes {
                let proj = w.dot(axis);
                for (wv, av) in w.iter_mut().zip(axis.iter()) {
                    *wv -= proj * av;
                }
            }
            if !normalize(&mut w) {
                break; // No variance left along any remaining direction.
            }
            v = w;
        }
        axes.push(v);
    }

    let mut points = Array2::<f32>::zeros((n, 2));
    for (c, axis) in axes.iter().enumerate() {
        let scores = x.dot(axis);
        let scale = scores.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-12);
        for i in 0..n {
            points[[i, c]] = (scores[i] / scale) as f32;
        }
    }
    Ok(points)
}

fn normalize(v: &mut Array1<f64>) -> bool {
    let norm = v.dot(v).sqrt();
    if norm < 1e-12 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}
