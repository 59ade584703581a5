//! A small reverse-mode autodiff tape over dynamic-rank `f32` arrays.
//!
//! Nodes are appended in creation order, which is automatically a valid
//! topological order, so the backward pass is a single reverse sweep.
//! Parameters live outside the graph (see [`crate::nn::Params`]); a fresh
//! graph is built for every training step.
//!
//! Broadcasting in binary ops is asymmetric by design: the output always has
//! the left operand's shape and the right operand must be broadcastable to
//! it. The backward pass sums gradients over broadcast axes.

use ndarray::{ArrayD, Axis, Ix2, Slice};

use crate::error::{Error, Result};

/// Handle to a node in one specific [`Graph`]. Handles must not be mixed
/// across graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Abs(Var),
    Scale(Var, f32),
    AddScalar(Var),
    SumAll(Var),
    MeanAll(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    Matmul(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        pad: usize,
        dilation: usize,
    },
    Reshape(Var),
    Concat(Vec<Var>, usize),
    SliceAxis(Var, usize, usize, usize),
    SwapAxes(Var, usize, usize),
}

struct Node {
    value: ArrayD<f32>,
    op: Op,
    requires: bool,
}

/// The autodiff tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<ArrayD<f32>>>,
}

/// Sums `g` down to `shape` by collapsing axes that were broadcast.
fn unbroadcast(mut g: ArrayD<f32>, shape: &[usize]) -> ArrayD<f32> {
    while g.ndim() > shape.len() {
        g = g.sum_axis(Axis(0));
    }
    for ax in 0..shape.len() {
        if shape[ax] == 1 && g.shape()[ax] != 1 {
            g = g.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    g
}

fn as2(a: &ArrayD<f32>) -> ndarray::ArrayView2<'_, f32> {
    a.view().into_dimensionality::<Ix2>().expect("2-D node")
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<f32>, op: Op, requires: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    /// Adds a constant leaf (no gradient flows into it).
    pub fn input(&mut self, value: ArrayD<f32>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Adds a trainable leaf; its gradient is available after
    /// [`Graph::backward`].
    pub fn param(&mut self, value: ArrayD<f32>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &ArrayD<f32> {
        &self.nodes[v.0].value
    }

    /// Scalar payload of a 0-d or single-element node.
    pub fn scalar(&self, v: Var) -> f32 {
        let a = &self.nodes[v.0].value;
        assert_eq!(a.len(), 1, "scalar() on a node with {} elements", a.len());
        *a.iter().next().unwrap()
    }

    /// Gradient of the last [`Graph::backward`] target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&ArrayD<f32>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    // ---- elementwise binary ops (output takes the lhs shape) ----

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f32, f32) -> f32, op: Op) -> Var {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let bb = bv
            .broadcast(av.raw_dim())
            .unwrap_or_else(|| panic!(
                "rhs shape {:?} does not broadcast to lhs shape {:?}",
                bv.shape(),
                av.shape()
            ));
        let mut out = av.clone();
        out.zip_mut_with(&bb, |x, &y| *x = f(*x, y));
        let requires = self.requires(a) || self.requires(b);
        self.push(out, op, requires)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    // ---- elementwise unary ops ----

    fn unary(&mut self, a: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let out = self.nodes[a.0].value.mapv(f);
        let requires = self.requires(a);
        self.push(out, op, requires)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f32::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f32::exp, Op::Exp(a))
    }

    /// Natural log; callers are responsible for keeping inputs positive
    /// (compose with an epsilon add).
    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f32::ln, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f32::sqrt, Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f32::abs, Op::Abs(a))
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f32) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.sum();
        let requires = self.requires(a);
        self.push(ndarray::arr0(s).into_dyn(), Op::SumAll(a), requires)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let m = v.sum() / v.len() as f32;
        let requires = self.requires(a);
        self.push(ndarray::arr0(m).into_dyn(), Op::MeanAll(a), requires)
    }

    /// Sum over one axis, keeping it as a length-1 dimension.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Var {
        let out = self.nodes[a.0].value.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        let requires = self.requires(a);
        self.push(out, Op::SumAxis(a, axis), requires)
    }

    /// Mean over one axis, keeping it as a length-1 dimension.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Var {
        let v = &self.nodes[a.0].value;
        let n = v.shape()[axis] as f32;
        let out = v.sum_axis(Axis(axis)).insert_axis(Axis(axis)) / n;
        let requires = self.requires(a);
        self.push(out, Op::MeanAxis(a, axis), requires)
    }

    /// Per-row maximum as a detached constant `[rows, 1]`; used for stable
    /// softmax and logsumexp without a max gradient path.
    pub fn detach_max_axis(&mut self, a: Var, axis: usize) -> Var {
        let v = &self.nodes[a.0].value;
        let out = v
            .fold_axis(Axis(axis), f32::MIN, |acc, &x| acc.max(x))
            .insert_axis(Axis(axis));
        self.input(out)
    }

    // ---- linear algebra ----

    /// 2-D matrix product `[m, k] @ [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = as2(&self.nodes[a.0].value)
            .dot(&as2(&self.nodes[b.0].value))
            .into_dyn();
        let requires = self.requires(a) || self.requires(b);
        self.push(out, Op::Matmul(a, b), requires)
    }

    /// 1-D convolution over the last axis: `x [b, c_in, t]`, `w [c_out,
    /// c_in, k]`, optional `bias [c_out]`, stride 1. Output length is
    /// `t + 2 pad - dilation (k - 1)`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, pad: usize, dilation: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let (b, c_in, t) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (c_out, c_in_w, k) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
        assert_eq!(c_in, c_in_w, "conv1d channel mismatch");
        let span = dilation * (k - 1);
        let t_out = (t + 2 * pad)
            .checked_sub(span)
            .filter(|&n| n > 0)
            .unwrap_or_else(|| panic!("conv1d receptive field {span} exceeds padded input {t}"));

        let w2 = wv
            .view()
            .into_shape_with_order((c_out, c_in * k))
            .expect("contiguous conv weight");
        let mut out = ArrayD::<f32>::zeros(ndarray::IxDyn(&[b, c_out, t_out]));
        let mut cols = ndarray::Array2::<f32>::zeros((c_in * k, t_out));
        for bi in 0..b {
            cols.fill(0.0);
            for ci in 0..c_in {
                for ki in 0..k {
                    let row = ci * k + ki;
                    for to in 0..t_out {
                        let ti = to + ki * dilation;
                        if ti >= pad && ti - pad < t {
                            cols[[row, to]] = xv[[bi, ci, ti - pad]];
                        }
                    }
                }
            }
            let prod = w2.dot(&cols);
            for co in 0..c_out {
                let base = bias.map(|bv| self.nodes[bv.0].value[[co]]).unwrap_or(0.0);
                for to in 0..t_out {
                    out[[bi, co, to]] = prod[[co, to]] + base;
                }
            }
        }
        let requires = self.requires(x)
            || self.requires(w)
            || bias.map(|bv| self.requires(bv)).unwrap_or(false);
        self.push(
            out,
            Op::Conv1d {
                x,
                w,
                bias,
                pad,
                dilation,
            },
            requires,
        )
    }

    // ---- shape ops ----

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = &self.nodes[a.0].value;
        assert_eq!(
            v.len(),
            shape.iter().product::<usize>(),
            "reshape element count mismatch"
        );
        let out = v
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(ndarray::IxDyn(shape))
            .expect("reshape of contiguous node");
        let requires = self.requires(a);
        self.push(out, Op::Reshape(a), requires)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of zero nodes");
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views).expect("concat shape mismatch");
        let requires = parts.iter().any(|p| self.requires(*p));
        self.push(out, Op::Concat(parts.to_vec(), axis), requires)
    }

    pub fn slice_axis(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let out = self.nodes[a.0]
            .value
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .to_owned();
        let requires = self.requires(a);
        self.push(out, Op::SliceAxis(a, axis, start, len), requires)
    }

    pub fn swap_axes(&mut self, a: Var, ax0: usize, ax1: usize) -> Var {
        let mut view = self.nodes[a.0].value.view();
        view.swap_axes(ax0, ax1);
        let out = view.as_standard_layout().into_owned();
        let requires = self.requires(a);
        self.push(out, Op::SwapAxes(a, ax0, ax1), requires)
    }

    // ---- backward ----

    /// Accumulates `delta` into the pending gradient slot for `v`.
    fn accum(grads: &mut [Option<ArrayD<f32>>], v: Var, delta: ArrayD<f32>) {
        match &mut grads[v.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    /// Runs reverse-mode differentiation from `target` (any shape; the seed
    /// gradient is all ones). Gradients of all `requires` nodes become
    /// available through [`Graph::grad`].
    pub fn backward(&mut self, target: Var) {
        let n = self.nodes.len();
        let mut grads: Vec<Option<ArrayD<f32>>> = (0..n).map(|_| None).collect();
        grads[target.0] = Some(ArrayD::ones(self.nodes[target.0].value.raw_dim()));

        for id in (0..=target.0).rev() {
            if !self.nodes[id].requires {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].clone() else { continue };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    if self.requires(a) {
                        Self::accum(&mut grads, a, g.clone());
                    }
                    if self.requires(b) {
                        let shape = self.nodes[b.0].value.shape().to_vec();
                        Self::accum(&mut grads, b, unbroadcast(g, &shape));
                    }
                }
                Op::Sub(a, b) => {
                    if self.requires(a) {
                        Self::accum(&mut grads, a, g.clone());
                    }
                    if self.requires(b) {
                        let shape = self.nodes[b.0].value.shape().to_vec();
                        Self::accum(&mut grads, b, unbroadcast(-g, &shape));
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = &self.nodes[b.0].value;
                    let bb = bv.broadcast(av.raw_dim()).unwrap().to_owned();
                    if self.requires(a) {
                        Self::accum(&mut grads, a, &g * &bb);
                    }
                    if self.requires(b) {
                        let shape = bv.shape().to_vec();
                        Self::accum(&mut grads, b, unbroadcast(&g * &av, &shape));
                    }
                }
                Op::Div(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = &self.nodes[b.0].value;
                    let bb = bv.broadcast(av.raw_dim()).unwrap().to_owned();
                    if self.requires(a) {
                        Self::accum(&mut grads, a, &g / &bb);
                    }
                    if self.requires(b) {
                        let shape = bv.shape().to_vec();
                        let db = -(&g * &av) / (&bb * &bb);
                        Self::accum(&mut grads, b, unbroadcast(db, &shape));
                    }
                }
                Op::Relu(a) => {
                    let mask = self.nodes[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    Self::accum(&mut grads, a, &g * &mask);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    Self::accum(&mut grads, a, &g * &(y * &y.mapv(|v| 1.0 - v)));
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[id].value;
                    Self::accum(&mut grads, a, &g * &y.mapv(|v| 1.0 - v * v));
                }
                Op::Exp(a) => {
                    let y = self.nodes[id].value.clone();
                    Self::accum(&mut grads, a, &g * &y);
                }
                Op::Ln(a) => {
                    let x = &self.nodes[a.0].value;
                    Self::accum(&mut grads, a, &g / x);
                }
                Op::Sqrt(a) => {
                    let y = &self.nodes[id].value;
                    Self::accum(&mut grads, a, &g * &y.mapv(|v| 0.5 / v));
                }
                Op::Abs(a) => {
                    let s = self.nodes[a.0].value.mapv(|x| {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    Self::accum(&mut grads, a, &g * &s);
                }
                Op::Scale(a, c) => Self::accum(&mut grads, a, g.mapv(|v| v * c)),
                Op::AddScalar(a) => Self::accum(&mut grads, a, g),
                Op::SumAll(a) => {
                    let shape = self.nodes[a.0].value.raw_dim();
                    let seed = *g.iter().next().unwrap();
                    Self::accum(&mut grads, a, ArrayD::from_elem(shape, seed));
                }
                Op::MeanAll(a) => {
                    let shape = self.nodes[a.0].value.raw_dim();
                    let n_el = self.nodes[a.0].value.len() as f32;
                    let seed = *g.iter().next().unwrap() / n_el;
                    Self::accum(&mut grads, a, ArrayD::from_elem(shape, seed));
                }
                Op::SumAxis(a, _axis) => {
                    let shape = self.nodes[a.0].value.raw_dim();
                    let gb = g.broadcast(shape).unwrap().to_owned();
                    Self::accum(&mut grads, a, gb);
                }
                Op::MeanAxis(a, axis) => {
                    let shape = self.nodes[a.0].value.raw_dim();
                    let n_ax = shape[axis] as f32;
                    let gb = g.broadcast(shape).unwrap().mapv(|v| v / n_ax);
                    Self::accum(&mut grads, a, gb);
                }
                Op::Matmul(a, b) => {
                    let g2 = as2(&g).to_owned();
                    if self.requires(a) {
                        let bv = as2(&self.nodes[b.0].value).to_owned();
                        Self::accum(&mut grads, a, g2.dot(&bv.t()).into_dyn());
                    }
                    if self.requires(b) {
                        let av = as2(&self.nodes[a.0].value).to_owned();
                        Self::accum(&mut grads, b, av.t().dot(&g2).into_dyn());
                    }
                }
                Op::Conv1d {
                    x,
                    w,
                    bias,
                    pad,
                    dilation,
                } => {
                    self.conv1d_backward(&mut grads, &g, x, w, bias, pad, dilation);
                }
                Op::Reshape(a) => {
                    let shape = self.nodes[a.0].value.raw_dim();
                    let ga = g
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order(shape)
                        .unwrap();
                    Self::accum(&mut grads, a, ga);
                }
                Op::Concat(parts, axis) => {
                    let mut start = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.shape()[axis];
                        if self.requires(p) {
                            let gp = g
                                .slice_axis(Axis(axis), Slice::from(start..start + len))
                                .to_owned();
                            Self::accum(&mut grads, p, gp);
                        }
                        start += len;
                    }
                }
                Op::SliceAxis(a, axis, start, len) => {
                    let mut ga = ArrayD::zeros(self.nodes[a.0].value.raw_dim());
                    ga.slice_axis_mut(Axis(axis), Slice::from(start..start + len))
                        .assign(&g);
                    Self::accum(&mut grads, a, ga);
                }
                Op::SwapAxes(a, ax0, ax1) => {
                    let mut view = g.view();
                    view.swap_axes(ax0, ax1);
                    Self::accum(&mut grads, a, view.as_standard_layout().into_owned());
                }
            }
        }
        self.grads = grads;
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &self,
        grads: &mut [Option<ArrayD<f32>>],
        g: &ArrayD<f32>,
        x: Var,
        w: Var,
        bias: Option<Var>,
        pad: usize,
        dilation: usize,
    ) {
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let (b, c_in, t) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (c_out, _, k) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
        let t_out = g.shape()[2];

        let need_x = self.requires(x);
        let need_w = self.requires(w);
        let mut dx = ArrayD::<f32>::zeros(xv.raw_dim());
        let mut dw = ArrayD::<f32>::zeros(wv.raw_dim());
        for bi in 0..b {
            for co in 0..c_out {
                for to in 0..t_out {
                    let go = g[[bi, co, to]];
                    if go == 0.0 {
                        continue;
                    }
                    for ci in 0..c_in {
                        for ki in 0..k {
                            let ti = to + ki * dilation;
                            if ti >= pad && ti - pad < t {
                                if need_w {
                                    dw[[co, ci, ki]] += go * xv[[bi, ci, ti - pad]];
                                }
                                if need_x {
                                    dx[[bi, ci, ti - pad]] += go * wv[[co, ci, ki]];
                                }
                            }
                        }
                    }
                }
            }
        }
        if need_x {
            Self::accum(grads, x, dx);
        }
        if need_w {
            Self::accum(grads, w, dw);
        }
        if let Some(bv) = bias {
            if self.requires(bv) {
                let db = g.sum_axis(Axis(2)).sum_axis(Axis(0));
                Self::accum(grads, bv, db.into_dyn());
            }
        }
    }
}

/// Checks `value.shape()` against an expected shape, returning a
/// [`Error::ShapeError`] naming the context on mismatch.
pub fn expect_shape(value: &ArrayD<f32>, shape: &[usize], context: &str) -> Result<()> {
    if value.shape() != shape {
        return Err(Error::ShapeError(format!(
            "{context}: expected {shape:?}, got {:?}",
            value.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Compares the analytic gradient of `f`'s scalar output against central
    /// finite differences at every coordinate of every input.
    fn check_grads(
        inputs: &[ArrayD<f32>],
        f: impl Fn(&mut Graph, &[Var]) -> Var,
        tol: f32,
    ) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
        let out = f(&mut g, &vars);
        assert_eq!(g.value(out).len(), 1, "gradient check target must be scalar");
        g.backward(out);
        let analytic: Vec<ArrayD<f32>> = vars
            .iter()
            .map(|v| g.grad(*v).expect("missing grad").clone())
            .collect();

        let eps = 3e-3f32;
        for (i, input) in inputs.iter().enumerate() {
            for idx in 0..input.len() {
                let mut lo = inputs.to_vec();
                let mut hi = inputs.to_vec();
                lo[i].as_slice_mut().unwrap()[idx] -= eps;
                hi[i].as_slice_mut().unwrap()[idx] += eps;
                let eval = |xs: &[ArrayD<f32>]| {
                    let mut g = Graph::new();
                    let vs: Vec<Var> = xs.iter().map(|x| g.param(x.clone())).collect();
                    let o = f(&mut g, &vs);
                    g.scalar(o) as f64
                };
                let numeric = ((eval(&hi) - eval(&lo)) / (2.0 * eps as f64)) as f32;
                let got = analytic[i].as_slice().unwrap()[idx];
                let denom = numeric.abs().max(got.abs()).max(1.0);
                assert!(
                    (numeric - got).abs() / denom < tol,
                    "input {i} coord {idx}: analytic {got}, numeric {numeric}"
                );
            }
        }
    }

    fn rand_array(shape: &[usize], seed: u64, lo: f32, hi: f32) -> ArrayD<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(lo..hi))
    }

    #[test]
    fn forward_values_match_hand_computed() {
        let mut g = Graph::new();
        let a = g.input(ndarray::arr2(&[[1.0f32, 2.0], [3.0, 4.0]]).into_dyn());
        let b = g.input(ndarray::arr2(&[[5.0f32], [6.0]]).into_dyn());
        let c = g.matmul(a, b); // [17, 39]
        let d = g.sum_all(c);
        assert_eq!(g.scalar(d), 56.0);

        let e = g.input(ndarray::arr1(&[10.0f32, 20.0]).into_dyn());
        let f = g.add(a, e); // rhs [2] broadcasts across rows
        assert_eq!(g.value(f)[[1, 1]], 24.0);
    }

    #[test]
    fn grad_arithmetic_and_broadcast() {
        let a = rand_array(&[3, 4], 1, -1.0, 1.0);
        let b = rand_array(&[1, 4], 2, 0.5, 1.5); // broadcast rhs
        check_grads(&[a, b], |g, v| {
            let s = g.sub(v[0], v[1]);
            let m = g.mul(s, v[0]);
            let d = g.div(m, v[1]);
            g.mean_all(d)
        }, 2e-2);
    }

    #[test]
    fn grad_activations() {
        let a = rand_array(&[2, 5], 3, 0.3, 1.2); // keep away from relu/abs kinks
        check_grads(&[a], |g, v| {
            let r = g.relu(v[0]);
            let s = g.sigmoid(r);
            let t = g.tanh(s);
            let e = g.exp(t);
            let q = g.sqrt(e);
            let l = g.ln(q);
            let ab = g.abs(l);
            g.sum_all(ab)
        }, 2e-2);
    }

    #[test]
    fn grad_matmul_and_reductions() {
        let a = rand_array(&[3, 4], 4, -1.0, 1.0);
        let b = rand_array(&[4, 2], 5, -1.0, 1.0);
        check_grads(&[a, b], |g, v| {
            let p = g.matmul(v[0], v[1]);
            let s = g.sum_axis(p, 1);
            let m = g.mean_axis(s, 0);
            g.sum_all(m)
        }, 2e-2);
    }

    #[test]
    fn grad_shape_ops() {
        let a = rand_array(&[2, 3, 4], 6, -1.0, 1.0);
        let b = rand_array(&[2, 3, 4], 7, -1.0, 1.0);
        check_grads(&[a, b], |g, v| {
            let c = g.concat(&[v[0], v[1]], 1); // [2, 6, 4]
            let s = g.slice_axis(c, 1, 2, 3);
            let t = g.swap_axes(s, 1, 2);
            let r = g.reshape(t, &[2, 12]);
            let sq = g.square(r);
            g.mean_all(sq)
        }, 2e-2);
    }

    #[test]
    fn grad_conv1d_with_padding_and_dilation() {
        let x = rand_array(&[2, 3, 8], 8, -1.0, 1.0);
        let w = rand_array(&[4, 3, 3], 9, -0.5, 0.5);
        let bias = rand_array(&[4], 10, -0.1, 0.1);
        check_grads(&[x.clone(), w.clone(), bias.clone()], |g, v| {
            let y = g.conv1d(v[0], v[1], Some(v[2]), 1, 1);
            let sq = g.square(y);
            g.sum_all(sq)
        }, 2e-2);
        check_grads(&[x, w, bias], |g, v| {
            let y = g.conv1d(v[0], v[1], Some(v[2]), 2, 2);
            let sq = g.square(y);
            g.sum_all(sq)
        }, 2e-2);
    }

    #[test]
    fn conv1d_matches_direct_computation() {
        // k=1 conv with no padding is a per-time-step linear map.
        let mut g = Graph::new();
        let x = g.input(rand_array(&[1, 2, 5], 11, -1.0, 1.0));
        let w = g.input(rand_array(&[3, 2, 1], 12, -1.0, 1.0));
        let y = g.conv1d(x, w, None, 0, 1);
        assert_eq!(g.value(y).shape(), &[1, 3, 5]);
        for t in 0..5 {
            for co in 0..3 {
                let expect: f32 = (0..2)
                    .map(|ci| g.value(x)[[0, ci, t]] * g.value(w)[[co, ci, 0]])
                    .sum();
                assert!((g.value(y)[[0, co, t]] - expect).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn grad_softmax_cross_entropy_composition() {
        // -log softmax picked out with a mask: the building block of both
        // the verification loss and the classifier heads.
        let logits = rand_array(&[4, 3], 13, -2.0, 2.0);
        check_grads(&[logits], |g, v| {
            let m = g.detach_max_axis(v[0], 1);
            let shifted = g.sub(v[0], m);
            let e = g.exp(shifted);
            let z = g.sum_axis(e, 1);
            let lz = g.ln(z);
            let lse = g.add(lz, m);
            let mask = g.input(
                ndarray::arr2(&[
                    [1.0f32, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                    [1.0, 0.0, 0.0],
                ])
                .into_dyn(),
            );
            let picked = g.mul(v[0], mask);
            let target = g.sum_axis(picked, 1);
            let nll = g.sub(lse, target);
            g.mean_all(nll)
        }, 2e-2);
    }

    #[test]
    fn gradients_accumulate_across_reuse() {
        // y = x * x + x: dy/dx = 2x + 1
        let mut g = Graph::new();
        let x = g.param(ndarray::arr1(&[3.0f32]).into_dyn());
        let sq = g.mul(x, x);
        let y = g.add(sq, x);
        let s = g.sum_all(y);
        g.backward(s);
        assert_eq!(g.grad(x).unwrap()[[0]], 7.0);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(ndarray::arr1(&[2.0f32]).into_dyn());
        let c = g.input(ndarray::arr1(&[5.0f32]).into_dyn());
        let y = g.mul(x, c);
        let s = g.sum_all(y);
        g.backward(s);
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap()[[0]], 5.0);
    }
}
