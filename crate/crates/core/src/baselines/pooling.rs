//! Sequence pooling for the baseline extractors: attentive pooling (learned
//! softmax weights over frames) and statistics pooling (mean ++ std).

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::layers::softmax_rows;
use crate::nn::params::Binder;

/// Attentive pooling over `frames [T, D]` with linear scoring
/// `score_t = w . h_t + b`: output = sum_t softmax(score)_t * h_t.
pub fn attentive_pooling(frames: &Array2<f32>, w: &Array1<f32>, b: f32) -> Result<Array1<f32>> {
    let (t, d) = frames.dim();
    if t == 0 {
        return Err(Error::EmptyInput("attentive pooling needs >= 1 frame".into()));
    }
    if w.len() != d {
        return Err(Error::ShapeError(format!(
            "attention weight width {} does not match frame width {d}",
            w.len()
        )));
    }
    let scores: Vec<f64> = frames
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(w.iter()).map(|(x, wi)| (x * wi) as f64).sum::<f64>() + b as f64)
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut out = Array1::<f32>::zeros(d);
    for (ti, e) in exps.iter().enumerate() {
        let alpha = (e / z) as f32;
        for di in 0..d {
            out[di] += alpha * frames[[ti, di]];
        }
    }
    Ok(out)
}

/// Statistics pooling over `frames [T, D]`: per-dimension mean concatenated
/// with per-dimension population standard deviation, width `2 D`.
pub fn statistics_pooling(frames: &Array2<f32>) -> Result<Array1<f32>> {
    let (t, d) = frames.dim();
    if t < 2 {
        return Err(Error::DegenerateSequence(format!(
            "statistics pooling needs >= 2 frames, got {t}"
        )));
    }
    let mut out = Array1::<f32>::zeros(2 * d);
    for di in 0..d {
        let mut mean = 0.0f64;
        for ti in 0..t {
            mean += frames[[ti, di]] as f64;
        }
        mean /= t as f64;
        let mut var = 0.0f64;
        for ti in 0..t {
            let diff = frames[[ti, di]] as f64 - mean;
            var += diff * diff;
        }
        var /= t as f64;
        out[di] = mean as f32;
        out[d + di] = var.sqrt() as f32;
    }
    Ok(out)
}

/// Graph version of attentive pooling for training. `hs` are per-step
/// hidden states `[B, D]`; scores come from the linear layer at
/// `{prefix}.w` / `{prefix}.b` (output width 1). Returns `[B, D]`.
pub fn attentive_pooling_graph(
    g: &mut Graph,
    binder: &mut Binder,
    prefix: &str,
    hs: &[Var],
) -> Result<Var> {
    if hs.is_empty() {
        return Err(Error::EmptyInput("attentive pooling needs >= 1 frame".into()));
    }
    let scores: Vec<Var> = hs
        .iter()
        .map(|&h| crate::nn::layers::linear(g, binder, prefix, h))
        .collect::<Result<_>>()?;
    let score_mat = g.concat(&scores, 1); // [B, T]
    let alphas = softmax_rows(g, score_mat);
    let mut acc: Option<Var> = None;
    for (t, &h) in hs.iter().enumerate() {
        let a_t = g.slice_axis(alphas, 1, t, 1); // [B, 1] broadcasts over D
        let weighted = g.mul(h, a_t);
        acc = Some(match acc {
            None => weighted,
            Some(prev) => g.add(prev, weighted),
        });
    }
    Ok(acc.unwrap())
}

/// Graph version of statistics pooling for training. `hs` are per-step
/// outputs `[B, D]`; returns `[B, 2 D]` (mean ++ std). A small epsilon
/// inside the square root keeps gradients finite for constant sequences.
pub fn statistics_pooling_graph(g: &mut Graph, hs: &[Var]) -> Result<Var> {
    if hs.len() < 2 {
        return Err(Error::DegenerateSequence(format!(
            "statistics pooling needs >= 2 frames, got {}",
            hs.len()
        )));
    }
    let t = hs.len() as f32;
    let mut sum: Option<Var> = None;
    let mut sum_sq: Option<Var> = None;
    for &h in hs {
        let h_sq = g.square(h);
        sum = Some(match sum {
            None => h,
            Some(prev) => g.add(prev, h),
        });
        sum_sq = Some(match sum_sq {
            None => h_sq,
            Some(prev) => g.add(prev, h_sq),
        });
    }
    let mean = g.scale(sum.unwrap(), 1.0 / t);
    let mean_sq = g.scale(sum_sq.unwrap(), 1.0 / t);
    let mean2 = g.square(mean);
    let var = g.sub(mean_sq, mean2);
    // Population variance can go fractionally negative in f32; clamp via
    // relu before the epsilon-stabilized root.
    let var_pos = g.relu(var);
    let var_eps = g.add_scalar(var_pos, 1e-8);
    let std = g.sqrt(var_eps);
    Ok(g.concat(&[mean, std], 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::init_linear;
    use crate::nn::params::Params;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_scores_give_frame_mean() {
        let frames = array![[1.0f32, 2.0], [3.0, 6.0], [5.0, 10.0]];
        // w = 0 makes every score equal b, so weights are uniform.
        let out = attentive_pooling(&frames, &array![0.0, 0.0], 0.7).unwrap();
        assert_abs_diff_eq!(out[0], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out[1], 6.0, epsilon = 1e-6);
    }

    #[test]
    fn single_frame_passes_through() {
        let frames = array![[4.0f32, -2.0, 9.0]];
        let out = attentive_pooling(&frames, &array![0.3, -0.1, 0.2], 0.0).unwrap();
        assert_eq!(out.to_vec(), vec![4.0, -2.0, 9.0]);
    }

    #[test]
    fn hand_set_scores_weight_two_thirds_one_third() {
        // Frames [ln2] and [0] with w = [1], b = 0 give scores [ln2, 0],
        // softmax weights [2/3, 1/3], output 2/3 * ln2.
        let ln2 = std::f32::consts::LN_2;
        let frames = array![[ln2], [0.0f32]];
        let out = attentive_pooling(&frames, &array![1.0], 0.0).unwrap();
        assert_abs_diff_eq!(out[0], 2.0 / 3.0 * ln2, epsilon = 1e-6);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let frames = Array2::<f32>::zeros((0, 3));
        assert!(matches!(
            attentive_pooling(&frames, &array![0.0, 0.0, 0.0], 0.0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn statistics_of_constant_frames_have_zero_std() {
        let frames = Array2::from_elem((5, 3), 2.5f32);
        let out = statistics_pooling(&frames).unwrap();
        assert_eq!(out.to_vec(), vec![2.5, 2.5, 2.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn population_convention_on_two_frames() {
        let frames = array![[0.0f32], [2.0]];
        let out = statistics_pooling(&frames).unwrap();
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out[1], 1.0, epsilon = 1e-6); // population std, not unbiased
    }

    #[test]
    fn statistics_pooling_is_permutation_invariant() {
        let frames = array![[1.0f32, -3.0], [4.0, 2.0], [-2.0, 7.0], [0.5, 0.0]];
        let permuted = array![[4.0f32, 2.0], [0.5, 0.0], [1.0, -3.0], [-2.0, 7.0]];
        let a = statistics_pooling(&frames).unwrap();
        let b = statistics_pooling(&permuted).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_frame_statistics_are_rejected() {
        let frames = Array2::<f32>::zeros((1, 4));
        assert!(matches!(
            statistics_pooling(&frames),
            Err(Error::DegenerateSequence(_))
        ));
    }

    #[test]
    fn graph_attentive_pooling_matches_array_version() {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        init_linear(&mut params, &mut rng, "att", 3, 1);
        let w_arr = params.get("att.w").unwrap().clone();
        let b_val = params.get("att.b").unwrap()[[0, 0]];
        let w1 = Array1::from_iter(w_arr.iter().cloned());

        let frames = array![[0.2f32, -0.4, 1.0], [0.9, 0.1, -0.3], [0.0, 0.5, 0.7]];
        let expected = attentive_pooling(&frames, &w1, b_val).unwrap();

        let mut g = Graph::new();
        let mut binder = Binder::new(&params);
        let hs: Vec<Var> = (0..3)
            .map(|t| {
                let row = frames.row(t).to_owned().into_shape_with_order((1, 3)).unwrap();
                g.input(row.into_dyn())
            })
            .collect();
        let pooled = attentive_pooling_graph(&mut g, &mut binder, "att", &hs).unwrap();
        let v = g.value(pooled);
        for d in 0..3 {
            assert_abs_diff_eq!(v[[0, d]], expected[d], epsilon = 1e-5);
        }
    }

    #[test]
    fn graph_statistics_pooling_matches_array_version() {
        let frames = array![[0.3f32, -1.0], [2.0, 0.5], [-0.7, 0.1]];
        let expected = statistics_pooling(&frames).unwrap();
        let params = Params::new();
        let mut g = Graph::new();
        let _binder = Binder::new(&params);
        let hs: Vec<Var> = (0..3)
            .map(|t| {
                let row = frames.row(t).to_owned().into_shape_with_order((1, 2)).unwrap();
                g.input(row.into_dyn())
            })
            .collect();
        let pooled = statistics_pooling_graph(&mut g, &hs).unwrap();
        let v = g.value(pooled);
        for d in 0..4 {
            assert_abs_diff_eq!(v[[0, d]], expected[d], epsilon = 1e-4);
        }
    }

    #[test]
    fn attentive_pooling_is_order_sensitive_with_nonzero_scores() {
        // Unlike statistics pooling, attention with content-dependent scores
        // changes when frame values move across positions only if the score
        // vector differs; swapping frames permutes weights with them, so the
        // pooled value is invariant for linear scoring. Order sensitivity
        // appears once scores come from recurrent context; emulate by
        // scoring frame t with the PREVIOUS frame's values (a one-step
        // recurrence) and checking the output changes under permutation.
        let frames = array![[1.0f32, 0.0], [0.0, 1.0], [2.0, -1.0]];
        let permuted = array![[2.0f32, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let w = array![0.8f32, -0.5];
        let recurrent_pool = |f: &Array2<f32>| {
            let t = f.nrows();
            let mut scores = vec![0.0f32; t];
            for ti in 1..t {
                scores[ti] = f.row(ti - 1).iter().zip(w.iter()).map(|(x, wi)| x * wi).sum();
            }
            let max = scores.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let exps: Vec<f32> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f32 = exps.iter().sum();
            let mut out = [0.0f32; 2];
            for ti in 0..t {
                for d in 0..2 {
                    out[d] += exps[ti] / z * f[[ti, d]];
                }
            }
            out
        };
        let a = recurrent_pool(&frames);
        let b = recurrent_pool(&permuted);
        assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() > 1e-6);
    }
}
