//! Layer compositions over the autodiff graph: linear maps, LSTM stacks,
//! normalization, and the loss primitives shared by the trainers.
//!
//! Layers do not own weights. Weights live in a [`Params`] map under dotted
//! names; `init_*` functions create them and the forward functions fetch
//! them through a [`Binder`].

use ndarray::{Array2, Array3, ArrayD};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::graph::{Graph, Var};
use crate::nn::params::{uniform_init, zeros, Binder, Params};

pub const INSTANCE_NORM_EPS: f32 = 1e-5;
pub const L2_NORM_EPS: f32 = 1e-8;

// ---------------------------------------------------------------- linear --

/// Creates `{prefix}.w [in, out]` and `{prefix}.b [1, out]`.
pub fn init_linear(params: &mut Params, rng: &mut ChaCha8Rng, prefix: &str, in_dim: usize, out_dim: usize) {
    params.insert(format!("{prefix}.w"), uniform_init(rng, &[in_dim, out_dim], in_dim));
    params.insert(format!("{prefix}.b"), zeros(&[1, out_dim]));
}

/// `x [n, in] -> [n, out]`.
pub fn linear(g: &mut Graph, b: &mut Binder, prefix: &str, x: Var) -> Result<Var> {
    let w = b.get(g, &format!("{prefix}.w"))?;
    let bias = b.get(g, &format!("{prefix}.b"))?;
    let y = g.matmul(x, w);
    Ok(g.add(y, bias))
}

// ------------------------------------------------------------------ lstm --

/// Creates one LSTM layer: `{prefix}.w_ih [in, 4h]`, `{prefix}.w_hh
/// [h, 4h]`, `{prefix}.bias [1, 4h]`. Gate order is input, forget, cell,
/// output.
pub fn init_lstm_layer(params: &mut Params, rng: &mut ChaCha8Rng, prefix: &str, in_dim: usize, hidden: usize) {
    params.insert(format!("{prefix}.w_ih"), uniform_init(rng, &[in_dim, 4 * hidden], hidden));
    params.insert(format!("{prefix}.w_hh"), uniform_init(rng, &[hidden, 4 * hidden], hidden));
    params.insert(format!("{prefix}.bias"), zeros(&[1, 4 * hidden]));
}

/// Runs one LSTM layer over per-time-step inputs `xs` (each `[batch, in]`),
/// returning the hidden state at every step. The input projection for all
/// steps is batched into a single matmul.
pub fn lstm_layer(
    g: &mut Graph,
    b: &mut Binder,
    prefix: &str,
    xs: &[Var],
    hidden: usize,
) -> Result<Vec<Var>> {
    assert!(!xs.is_empty(), "lstm over an empty sequence");
    let w_ih = b.get(g, &format!("{prefix}.w_ih"))?;
    let w_hh = b.get(g, &format!("{prefix}.w_hh"))?;
    let bias = b.get(g, &format!("{prefix}.bias"))?;
    let batch = g.value(xs[0]).shape()[0];

    let x_all = g.concat(xs, 0); // [t * batch, in]
    let px_all = g.matmul(x_all, w_ih); // [t * batch, 4h]

    let mut h = g.input(ArrayD::zeros(ndarray::IxDyn(&[batch, hidden])));
    let mut c = g.input(ArrayD::zeros(ndarray::IxDyn(&[batch, hidden])));
    let mut outputs = Vec::with_capacity(xs.len());
    for t in 0..xs.len() {
        let px = g.slice_axis(px_all, 0, t * batch, batch);
        let ph = g.matmul(h, w_hh);
        let lin = g.add(px, ph);
        let pre = g.add(lin, bias);
        let i_raw = g.slice_axis(pre, 1, 0, hidden);
        let f_raw = g.slice_axis(pre, 1, hidden, hidden);
        let g_raw = g.slice_axis(pre, 1, 2 * hidden, hidden);
        let o_raw = g.slice_axis(pre, 1, 3 * hidden, hidden);
        let i_gate = g.sigmoid(i_raw);
        let f_gate = g.sigmoid(f_raw);
        let g_gate = g.tanh(g_raw);
        let o_gate = g.sigmoid(o_raw);
        let keep = g.mul(f_gate, c);
        let write = g.mul(i_gate, g_gate);
        c = g.add(keep, write);
        let c_act = g.tanh(c);
        h = g.mul(o_gate, c_act);
        outputs.push(h);
    }
    Ok(outputs)
}

/// Creates `layers` stacked LSTM layers under `{prefix}.l{i}`.
pub fn init_lstm_stack(
    params: &mut Params,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    in_dim: usize,
    hidden: usize,
    layers: usize,
) {
    for l in 0..layers {
        let d = if l == 0 { in_dim } else { hidden };
        init_lstm_layer(params, rng, &format!("{prefix}.l{l}"), d, hidden);
    }
}

/// Runs a stack of LSTM layers; returns the top layer's per-step hidden
/// states.
pub fn lstm_stack(
    g: &mut Graph,
    b: &mut Binder,
    prefix: &str,
    xs: &[Var],
    hidden: usize,
    layers: usize,
) -> Result<Vec<Var>> {
    let mut seq: Vec<Var> = xs.to_vec();
    for l in 0..layers {
        seq = lstm_layer(g, b, &format!("{prefix}.l{l}"), &seq, hidden)?;
    }
    Ok(seq)
}

/// Creates a bidirectional layer under `{prefix}.fwd` / `{prefix}.bwd`.
pub fn init_bilstm_layer(params: &mut Params, rng: &mut ChaCha8Rng, prefix: &str, in_dim: usize, hidden: usize) {
    init_lstm_layer(params, rng, &format!("{prefix}.fwd"), in_dim, hidden);
    init_lstm_layer(params, rng, &format!("{prefix}.bwd"), in_dim, hidden);
}

/// Runs a bidirectional LSTM layer. Returns `(forward, backward)` hidden
/// sequences, both indexed by input time (the backward sequence is
/// re-reversed), each element `[batch, hidden]`.
pub fn bilstm_layer(
    g: &mut Graph,
    b: &mut Binder,
    prefix: &str,
    xs: &[Var],
    hidden: usize,
) -> Result<(Vec<Var>, Vec<Var>)> {
    let fwd = lstm_layer(g, b, &format!("{prefix}.fwd"), xs, hidden)?;
    let rev: Vec<Var> = xs.iter().rev().copied().collect();
    let mut bwd = lstm_layer(g, b, &format!("{prefix}.bwd"), &rev, hidden)?;
    bwd.reverse();
    Ok((fwd, bwd))
}

// ------------------------------------------------------------ conv layer --

/// Creates `{prefix}.w [out, in, k]` and `{prefix}.b [out]`.
pub fn init_conv1d(
    params: &mut Params,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    in_ch: usize,
    out_ch: usize,
    k: usize,
) {
    params.insert(format!("{prefix}.w"), uniform_init(rng, &[out_ch, in_ch, k], in_ch * k));
    params.insert(format!("{prefix}.b"), zeros(&[out_ch]));
}

/// `x [b, in, t]` convolved with `{prefix}` weights.
pub fn conv1d(
    g: &mut Graph,
    b: &mut Binder,
    prefix: &str,
    x: Var,
    pad: usize,
    dilation: usize,
) -> Result<Var> {
    let w = b.get(g, &format!("{prefix}.w"))?;
    let bias = b.get(g, &format!("{prefix}.b"))?;
    Ok(g.conv1d(x, w, Some(bias), pad, dilation))
}

// --------------------------------------------------------- normalization --

/// Instance normalization over the time axis of `x [b, c, t]`: each
/// (batch, channel) series is standardized to zero mean and unit variance.
/// No learned affine follows.
pub fn instance_norm(g: &mut Graph, x: Var) -> Var {
    let mean = g.mean_axis(x, 2); // [b, c, 1]
    let centered = g.sub(x, mean);
    let sq = g.square(centered);
    let var = g.mean_axis(sq, 2);
    let var_eps = g.add_scalar(var, INSTANCE_NORM_EPS);
    let std = g.sqrt(var_eps);
    g.div(centered, std)
}

/// Row-wise L2 normalization of `x [n, d]`.
pub fn l2_normalize_rows(g: &mut Graph, x: Var) -> Var {
    let sq = g.square(x);
    let ss = g.sum_axis(sq, 1); // [n, 1]
    let ss_eps = g.add_scalar(ss, L2_NORM_EPS);
    let norm = g.sqrt(ss_eps);
    g.div(x, norm)
}

// ------------------------------------------------------ softmax & losses --

/// Numerically stable per-row softmax of `x [n, k]`.
pub fn softmax_rows(g: &mut Graph, x: Var) -> Var {
    let m = g.detach_max_axis(x, 1);
    let shifted = g.sub(x, m);
    let e = g.exp(shifted);
    let z = g.sum_axis(e, 1);
    g.div(e, z)
}

/// Per-row `log sum exp` of `x [n, k]` as `[n, 1]`.
pub fn logsumexp_rows(g: &mut Graph, x: Var) -> Var {
    let m = g.detach_max_axis(x, 1);
    let shifted = g.sub(x, m);
    let e = g.exp(shifted);
    let z = g.sum_axis(e, 1);
    let lz = g.ln(z);
    g.add(lz, m)
}

/// Mean L1 distance between two same-shape tensors.
pub fn l1_loss(g: &mut Graph, a: Var, b: Var) -> Var {
    let d = g.sub(a, b);
    let ad = g.abs(d);
    g.mean_all(ad)
}

/// Mean negative log likelihood of `one_hot` targets under softmax of
/// `logits [n, k]`.
pub fn cross_entropy_mean(g: &mut Graph, logits: Var, one_hot: Var) -> Var {
    let lse = logsumexp_rows(g, logits); // [n, 1]
    let picked = g.mul(logits, one_hot);
    let target = g.sum_axis(picked, 1); // [n, 1]
    let nll = g.sub(lse, target);
    g.mean_all(nll)
}

/// One-hot encodes integer labels into `[n, k]`.
pub fn one_hot(labels: &[usize], k: usize) -> Array2<f32> {
    let mut out = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        assert!(l < k, "label {l} out of range for {k} classes");
        out[[i, l]] = 1.0;
    }
    out
}

// ------------------------------------------------------- sequence bridge --

/// Splits a `[batch, t, feat]` array into `t` constant nodes of
/// `[batch, feat]`.
pub fn time_steps(g: &mut Graph, batch: &Array3<f32>) -> Vec<Var> {
    let (b, t, f) = batch.dim();
    (0..t)
        .map(|ti| {
            let step = batch
                .slice(ndarray::s![.., ti, ..])
                .to_owned()
                .into_shape_with_order((b, f))
                .unwrap();
            g.input(step.into_dyn())
        })
        .collect()
}

/// Stacks per-step nodes (each `[batch, c]`) into `[batch, t, c]`.
pub fn stack_time(g: &mut Graph, xs: &[Var]) -> Var {
    let shape = g.value(xs[0]).shape().to_vec();
    let (b, c) = (shape[0], shape[1]);
    let expanded: Vec<Var> = xs.iter().map(|&x| g.reshape(x, &[b, 1, c])).collect();
    g.concat(&expanded, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::prelude::*;
    use rand::SeedableRng;

    /// Finite-difference check of d(loss)/d(param) for a forward pass
    /// expressed over Params.
    fn check_param_grads(
        params: &Params,
        forward: impl Fn(&mut Graph, &mut Binder) -> Var,
        tol: f32,
    ) {
        let mut g = Graph::new();
        let mut b = Binder::new(params);
        let loss = forward(&mut g, &mut b);
        g.backward(loss);
        let analytic = b.grads(&g);

        let eps = 3e-3f32;
        for name in params.names() {
            let base = params.get(name).unwrap().clone();
            for idx in 0..base.len() {
                let eval = |delta: f32| {
                    let mut p2 = params.clone();
                    p2.get_mut(name).unwrap().as_slice_mut().unwrap()[idx] += delta;
                    let mut g = Graph::new();
                    let mut b = Binder::new(&p2);
                    let loss = forward(&mut g, &mut b);
                    g.scalar(loss) as f64
                };
                let numeric = ((eval(eps) - eval(-eps)) / (2.0 * eps as f64)) as f32;
                let got = analytic[name].as_slice().unwrap()[idx];
                let denom = numeric.abs().max(got.abs()).max(1.0);
                assert!(
                    (numeric - got).abs() / denom < tol,
                    "{name}[{idx}]: analytic {got}, numeric {numeric}"
                );
            }
        }
    }

    fn rand_input(g: &mut Graph, rng: &mut ChaCha8Rng, shape: &[usize]) -> Var {
        let a = ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0f32));
        g.input(a)
    }

    #[test]
    fn linear_shapes_and_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = Params::new();
        init_linear(&mut params, &mut rng, "fc", 4, 3);
        let x = ArrayD::from_shape_fn(IxDyn(&[5, 4]), |_| rng.random_range(-1.0..1.0f32));
        check_param_grads(&params, |g, b| {
            let xv = g.input(x.clone());
            let y = linear(g, b, "fc", xv).unwrap();
            let sq = g.square(y);
            g.mean_all(sq)
        }, 2e-2);
    }

    #[test]
    fn lstm_output_shape_and_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = Params::new();
        init_lstm_layer(&mut params, &mut rng, "rnn", 3, 4);
        let seq: Vec<ArrayD<f32>> = (0..3)
            .map(|_| ArrayD::from_shape_fn(IxDyn(&[2, 3]), |_| rng.random_range(-1.0..1.0f32)))
            .collect();
        check_param_grads(&params, |g, b| {
            let xs: Vec<Var> = seq.iter().map(|s| g.input(s.clone())).collect();
            let hs = lstm_layer(g, b, "rnn", &xs, 4).unwrap();
            assert_eq!(hs.len(), 3);
            assert_eq!(g.value(hs[0]).shape(), &[2, 4]);
            let last = *hs.last().unwrap();
            let sq = g.square(last);
            g.mean_all(sq)
        }, 2e-2);
    }

    #[test]
    fn lstm_cell_matches_manual_recurrence() {
        // Single unit, single step: verify the gate arithmetic against a
        // hand-computed value.
        let mut params = Params::new();
        params.insert("rnn.w_ih", ndarray::arr2(&[[0.5f32, -0.5, 1.0, 0.25]]).into_dyn());
        params.insert("rnn.w_hh", ndarray::arr2(&[[0.0f32, 0.0, 0.0, 0.0]]).into_dyn());
        params.insert("rnn.bias", ndarray::arr2(&[[0.1f32, 0.2, -0.1, 0.0]]).into_dyn());
        let mut g = Graph::new();
        let mut b = Binder::new(&params);
        let x = g.input(ndarray::arr2(&[[2.0f32]]).into_dyn());
        let hs = lstm_layer(&mut g, &mut b, "rnn", &[x], 1).unwrap();
        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sigmoid(0.5 * 2.0 + 0.1);
        let f_ = sigmoid(-0.5 * 2.0 + 0.2);
        let c_in = (1.0f64 * 2.0 - 0.1).tanh();
        let o = sigmoid(0.25 * 2.0);
        let c = f_ * 0.0 + i * c_in;
        let h = o * c.tanh();
        assert!((g.value(hs[0])[[0, 0]] as f64 - h).abs() < 1e-6);
    }

    #[test]
    fn bilstm_backward_sees_the_future() {
        // The backward stream's state at t=0 must depend on the last input.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = Params::new();
        init_bilstm_layer(&mut params, &mut rng, "bi", 2, 3);
        let make_seq = |last: f32| {
            vec![
                ndarray::arr2(&[[0.5f32, -0.2]]).into_dyn(),
                ndarray::arr2(&[[0.1f32, 0.3]]).into_dyn(),
                ndarray::arr2(&[[last, 0.0]]).into_dyn(),
            ]
        };
        let run = |seq: Vec<ArrayD<f32>>| {
            let mut g = Graph::new();
            let mut b = Binder::new(&params);
            let xs: Vec<Var> = seq.into_iter().map(|s| g.input(s)).collect();
            let (fwd, bwd) = bilstm_layer(&mut g, &mut b, "bi", &xs, 3).unwrap();
            (
                g.value(fwd[0]).clone(),
                g.value(bwd[0]).clone(),
            )
        };
        let (f1, b1) = run(make_seq(0.9));
        let (f2, b2) = run(make_seq(-0.9));
        assert_eq!(f1, f2, "forward stream at t=0 must ignore the future");
        assert_ne!(b1, b2, "backward stream at t=0 must reflect the future");
    }

    #[test]
    fn instance_norm_standardizes_each_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = Graph::new();
        let x = rand_input(&mut g, &mut rng, &[2, 3, 50]);
        let y = instance_norm(&mut g, x);
        let v = g.value(y);
        for b in 0..2 {
            for c in 0..3 {
                let series: Vec<f32> = (0..50).map(|t| v[[b, c, t]]).collect();
                let mean: f32 = series.iter().sum::<f32>() / 50.0;
                let var: f32 = series.iter().map(|s| (s - mean).powi(2)).sum::<f32>() / 50.0;
                assert!(mean.abs() < 1e-5);
                assert!((var - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn instance_norm_gradients_are_correct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = ArrayD::from_shape_fn(IxDyn(&[1, 2, 6]), |_| rng.random_range(-1.0..1.0f32));
        let w = ArrayD::from_shape_fn(IxDyn(&[1, 2, 6]), |_| rng.random_range(-1.0..1.0f32));
        let mut params = Params::new();
        params.insert("x", x);
        let weight = w;
        check_param_grads(&params, |g, b| {
            let xv = b.get(g, "x").unwrap();
            let y = instance_norm(g, xv);
            let wv = g.input(weight.clone());
            let yw = g.mul(y, wv);
            g.sum_all(yw)
        }, 3e-2);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.input(ndarray::arr2(&[[1.0f32, 2.0, 3.0], [-5.0, 0.0, 5.0]]).into_dyn());
        let s = softmax_rows(&mut g, x);
        let v = g.value(s);
        for r in 0..2 {
            let sum: f32 = (0..3).map(|c| v[[r, c]]).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        assert!(v[[0, 2]] > v[[0, 1]] && v[[0, 1]] > v[[0, 0]]);
    }

    #[test]
    fn logsumexp_is_stable_for_large_inputs() {
        let mut g = Graph::new();
        let x = g.input(ndarray::arr2(&[[1000.0f32, 1000.0]]).into_dyn());
        let l = logsumexp_rows(&mut g, x);
        let expect = 1000.0 + (2.0f32).ln();
        assert!((g.value(l)[[0, 0]] - expect).abs() < 1e-3);
    }

    #[test]
    fn cross_entropy_matches_closed_form() {
        let mut g = Graph::new();
        let logits = g.input(ndarray::arr2(&[[2.0f32, 0.0], [0.0, 1.0]]).into_dyn());
        let targets = g.input(one_hot(&[0, 1], 2).into_dyn());
        let ce = cross_entropy_mean(&mut g, logits, targets);
        let e1 = -(2.0f64.exp() / (2.0f64.exp() + 1.0)).ln();
        let e2 = -(1.0f64.exp() / (1.0f64.exp() + 1.0)).ln();
        let expect = ((e1 + e2) / 2.0) as f32;
        assert!((g.scalar(ce) - expect).abs() < 1e-5);
    }

    #[test]
    fn l1_loss_matches_closed_form() {
        let mut g = Graph::new();
        let a = g.input(ndarray::arr1(&[1.0f32, -2.0, 3.0]).into_dyn());
        let b = g.input(ndarray::arr1(&[0.0f32, 0.0, 0.0]).into_dyn());
        let l = l1_loss(&mut g, a, b);
        assert!((g.scalar(l) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn l2_normalize_rows_gives_unit_norm() {
        let mut g = Graph::new();
        let x = g.input(ndarray::arr2(&[[3.0f32, 4.0], [0.5, 0.0]]).into_dyn());
        let y = l2_normalize_rows(&mut g, x);
        let v = g.value(y);
        for r in 0..2 {
            let n: f32 = (0..2).map(|c| v[[r, c]] * v[[r, c]]).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn time_steps_and_stack_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = Array3::from_shape_fn((2, 5, 3), |_| rng.random_range(-1.0..1.0f32));
        let mut g = Graph::new();
        let xs = time_steps(&mut g, &batch);
        assert_eq!(xs.len(), 5);
        let back = stack_time(&mut g, &xs);
        assert_eq!(g.value(back).shape(), &[2, 5, 3]);
        assert_eq!(g.value(back).clone().into_dimensionality::<ndarray::Ix3>().unwrap(), batch);
    }
}
