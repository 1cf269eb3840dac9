//! Reverse-mode autodiff over a linear tape of [`Tensor4`] values.
//!
//! Every op records its output value plus whatever it needs for the
//! backward pass. Nodes whose inputs never require a gradient are skipped
//! during [`Graph::backward`].

use crate::error::{Error, Result};
use crate::plane::reflect_index;

use super::conv::{conv2d_backward_select, conv2d_forward, Padding};
use super::tensor::Tensor4;

pub const BN_EPS: f64 = 1e-5;
/// Scores are clamped into `[SCORE_EPS, 1 - SCORE_EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with the supplied running statistics.
    Eval,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: Padding,
    },
    Add(Var, Var),
    Scale(Var, f64),
    MulChannel { x: Var, gate: Var },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    AvgPool2(Var),
    Upsample2(Var),
    Silu(Var),
    Sigmoid(Var),
    GlobalAvg(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor4,
        inv_std: Vec<f64>,
        mode: NormMode,
    },
    ReflectPad { x: Var, pad: usize },
    Crop { x: Var, pad: usize },
    Clamp01(Var),
    SmoothL1(Var, Var),
    Mse(Var, Var),
    NegLog { x: Var, complement: bool },
    Dot { x: Var, weights: Tensor4 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor4,
    op: Op,
    needs_grad: bool,
}

/// Batch statistics observed by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance.
    pub var: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; absent for nodes that needed none.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor4>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor4> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor4> {
        self.grads[v.0].take()
    }
}

fn check_same(a: &Tensor4, b: &Tensor4, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
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

    pub fn value(&self, v: Var) -> &Tensor4 {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor4, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn push(&mut self, value: Tensor4, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: Padding) -> Result<Var> {
        let bias = b.map(|b| self.value(b).data().to_vec());
        let out = conv2d_forward(self.value(x), self.value(w), bias.as_deref(), stride, pad)?;
        let mut deps = vec![x, w];
        deps.extend(b);
        let ng = self.any_grad(&deps);
        Ok(self.push(out, Op::Conv { x, w, b, stride, pad }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same(self.value(a), self.value(b), "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        let ng = self.any_grad(&[x]);
        self.push(out, Op::Scale(x, s), ng)
    }

    /// Multiplies each channel of `x` by the matching entry of a
    /// `(n, c, 1, 1)` gate.
    pub fn mul_channel(&mut self, x: Var, gate: Var) -> Result<Var> {
        let [n, c, _, _] = self.value(x).shape();
        if self.value(gate).shape() != [n, c, 1, 1] {
            return Err(Error::ShapeMismatch(format!(
                "gate {:?} does not match {:?}",
                self.value(gate).shape(),
                self.value(x).shape()
            )));
        }
        let mut out = self.value(x).clone();
        let g = self.value(gate).data().to_vec();
        for b in 0..n {
            for ch in 0..c {
                let s = g[b * c + ch];
                out.plane_slice_mut(b, ch).iter_mut().for_each(|v| *v *= s);
            }
        }
        let ng = self.any_grad(&[x, gate]);
        Ok(self.push(out, Op::MulChannel { x, gate }, ng))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .value(*parts.first().ok_or_else(|| Error::ShapeMismatch("empty concat".into()))?)
            .shape();
        let mut channels = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s[0] != first[0] || s[2] != first[2] || s[3] != first[3] {
                return Err(Error::ShapeMismatch(format!("concat {s:?} with {first:?}")));
            }
            channels += s[1];
        }
        let shape = [first[0], channels, first[2], first[3]];
        let mut out = Tensor4::zeros(shape);
        for n in 0..shape[0] {
            let mut c0 = 0;
            for &p in parts {
                let v = self.value(p);
                for c in 0..v.shape()[1] {
                    out.plane_slice_mut(n, c0 + c).copy_from_slice(v.plane_slice(n, c));
                }
                c0 += v.shape()[1];
            }
        }
        let ng = self.any_grad(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), ng))
    }

    /// Channels `start..end` of `x`.
    pub fn slice_channels(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        if start >= end || end > c {
            return Err(Error::ShapeMismatch(format!("channel range {start}..{end} of {c}")));
        }
        let mut out = Tensor4::zeros([n, end - start, h, w]);
        for b in 0..n {
            for ch in start..end {
                out.plane_slice_mut(b, ch - start)
                    .copy_from_slice(self.value(x).plane_slice(b, ch));
            }
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(out, Op::Slice { x, start }, ng))
    }

    /// 2x2 average pooling; spatial dims must be even.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::ShapeMismatch(format!("cannot halve {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor4::zeros([n, c, oh, ow]);
        for b in 0..n {
            for ch in 0..c {
                let src = self.value(x).plane_slice(b, ch);
                let dst = out.plane_slice_mut(b, ch);
                for y in 0..oh {
                    for xx in 0..ow {
                        let i = 2 * y * w + 2 * xx;
                        dst[y * ow + xx] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
                    }
                }
            }
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(out, Op::AvgPool2(x), ng))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let [n, c, h, w] = self.value(x).shape();
        let ow = 2 * w;
        let mut out = Tensor4::zeros([n, c, 2 * h, ow]);
        for b in 0..n {
            for ch in 0..c {
                let src = self.value(x).plane_slice(b, ch);
                let dst = out.plane_slice_mut(b, ch);
                for y in 0..2 * h {
                    for xx in 0..ow {
                        dst[y * ow + xx] = src[(y / 2) * w + xx / 2];
                    }
                }
            }
        }
        let ng = self.any_grad(&[x]);
        self.push(out, Op::Upsample2(x), ng)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * sigmoid(v));
        let ng = self.any_grad(&[x]);
        self.push(out, Op::Silu(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let ng = self.any_grad(&[x]);
        self.push(out, Op::Sigmoid(x), ng)
    }

    /// Spatial mean per channel, giving `(n, c, 1, 1)`.
    pub fn global_avg(&mut self, x: Var) -> Var {
        let [n, c, _, _] = self.value(x).shape();
        let v = self.value(x);
        let area = v.plane_len() as f64;
        let data = (0..n)
            .flat_map(|b| (0..c).map(move |ch| (b, ch)))
            .map(|(b, ch)| v.plane_slice(b, ch).iter().sum::<f64>() / area)
            .collect();
        let out = Tensor4::from_vec([n, c, 1, 1], data).expect("shape");
        let ng = self.any_grad(&[x]);
        self.push(out, Op::GlobalAvg(x), ng)
    }

    /// Per-channel batch norm. In [`NormMode::Train`] the batch statistics
    /// are returned so callers can update running estimates; in
    /// [`NormMode::Eval`] `running` supplies mean and variance.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let [n, c, h, w] = self.value(x).shape();
        let count = n * h * w;
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(Error::ShapeMismatch(format!("batch norm affine size vs {c} channels")));
        }
        let (mean, var, stats) = match mode {
            NormMode::Train => {
                if count < 2 {
                    return Err(Error::ShapeMismatch("batch norm needs two or more values per channel".into()));
                }
                let v = self.value(x);
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let s: f64 = (0..n).map(|b| v.plane_slice(b, ch).iter().sum::<f64>()).sum();
                    mean[ch] = s / count as f64;
                    let ss: f64 = (0..n)
                        .map(|b| v.plane_slice(b, ch).iter().map(|x| (x - mean[ch]).powi(2)).sum::<f64>())
                        .sum();
                    var[ch] = ss / count as f64;
                }
                let unbiased = var.iter().map(|v| v * count as f64 / (count - 1) as f64).collect();
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            NormMode::Eval => {
                let (m, v) = running
                    .ok_or_else(|| Error::InvalidParameter("eval batch norm needs running statistics".into()))?;
                if m.len() != c || v.len() != c {
                    return Err(Error::ShapeMismatch("running statistics size".into()));
                }
                (m.to_vec(), v.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gam = self.value(gamma).data().to_vec();
        let bet = self.value(beta).data().to_vec();
        let mut xhat = self.value(x).clone();
        let mut out = Tensor4::zeros(xhat.shape());
        for b in 0..n {
            for ch in 0..c {
                let xs = xhat.plane_slice_mut(b, ch);
                xs.iter_mut().for_each(|v| *v = (*v - mean[ch]) * inv_std[ch]);
                let os = out.plane_slice_mut(b, ch);
                for (o, &xh) in os.iter_mut().zip(xhat.plane_slice(b, ch)) {
                    *o = gam[ch] * xh + bet[ch];
                }
            }
        }
        let ng = self.any_grad(&[x, gamma, beta]);
        let var_out = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            },
            ng,
        );
        Ok((var_out, stats))
    }

    /// Mirror padding (edge sample not repeated) by `pad` on every side.
    pub fn reflect_pad(&mut self, x: Var, pad: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        if pad >= h || pad >= w {
            return Err(Error::ShapeMismatch(format!("reflect pad {pad} exceeds {h}x{w}")));
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let mut out = Tensor4::zeros([n, c, ph, pw]);
        for b in 0..n {
            for ch in 0..c {
                let src = self.value(x).plane_slice(b, ch);
                let dst = out.plane_slice_mut(b, ch);
                for y in 0..ph {
                    let sy = reflect_index(y as isize - pad as isize, h);
                    for xx in 0..pw {
                        dst[y * pw + xx] = src[sy * w + reflect_index(xx as isize - pad as isize, w)];
                    }
                }
            }
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(out, Op::ReflectPad { x, pad }, ng))
    }

    /// Removes `pad` rows/columns from every side.
    pub fn crop(&mut self, x: Var, pad: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        if 2 * pad >= h || 2 * pad >= w {
            return Err(Error::ShapeMismatch(format!("crop {pad} exceeds {h}x{w}")));
        }
        let (oh, ow) = (h - 2 * pad, w - 2 * pad);
        let mut out = Tensor4::zeros([n, c, oh, ow]);
        for b in 0..n {
            for ch in 0..c {
                let src = self.value(x).plane_slice(b, ch);
                let dst = out.plane_slice_mut(b, ch);
                for y in 0..oh {
                    let s = (y + pad) * w + pad;
                    dst[y * ow..(y + 1) * ow].copy_from_slice(&src[s..s + ow]);
                }
            }
        }
        let ng = self.any_grad(&[x]);
        Ok(self.push(out, Op::Crop { x, pad }, ng))
    }

    pub fn clamp01(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.clamp(0.0, 1.0));
        let ng = self.any_grad(&[x]);
        self.push(out, Op::Clamp01(x), ng)
    }

    /// Mean Huber loss with unit threshold.
    pub fn smooth_l1(&mut self, pred: Var, target: Var) -> Result<Var> {
        check_same(self.value(pred), self.value(target), "smooth_l1")?;
        let v = smooth_l1_value(self.value(pred).data(), self.value(target).data());
        let ng = self.any_grad(&[pred, target]);
        Ok(self.push(Tensor4::scalar(v), Op::SmoothL1(pred, target), ng))
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        check_same(self.value(pred), self.value(target), "mse")?;
        let v = mse_value(self.value(pred).data(), self.value(target).data());
        let ng = self.any_grad(&[pred, target]);
        Ok(self.push(Tensor4::scalar(v), Op::Mse(pred, target), ng))
    }

    /// Mean of `-ln(s)`, or of `-ln(1 - s)` when `complement` is set, over
    /// clamped scores.
    pub fn neg_log(&mut self, x: Var, complement: bool) -> Var {
        let d = self.value(x).data();
        let v = d.iter().map(|&s| neg_log_value(s, complement)).sum::<f64>() / d.len() as f64;
        let ng = self.any_grad(&[x]);
        self.push(Tensor4::scalar(v), Op::NegLog { x, complement }, ng)
    }

    /// Scalar `sum(weights * x)`.
    pub fn dot(&mut self, x: Var, weights: Tensor4) -> Result<Var> {
        check_same(self.value(x), &weights, "dot")?;
        let v = self.value(x).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        let ng = self.any_grad(&[x]);
        Ok(self.push(Tensor4::scalar(v), Op::Dot { x, weights }, ng))
    }

    /// Backpropagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::ShapeMismatch("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor4>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor4::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor4>], v: Var, g: Tensor4) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node, g: &Tensor4, grads: &mut [Option<Tensor4>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, stride, pad } => {
                let cg = conv2d_backward_select(
                    self.value(*x),
                    self.value(*w),
                    g,
                    *stride,
                    *pad,
                    self.needs_grad(*x),
                    self.needs_grad(*w),
                )?;
                if let Some(gx) = cg.grad_x {
                    self.accumulate(grads, *x, gx);
                }
                if let Some(gw) = cg.grad_w {
                    self.accumulate(grads, *w, gw);
                }
                if let Some(b) = b {
                    let shape = self.value(*b).shape();
                    self.accumulate(grads, *b, Tensor4::from_vec(shape, cg.grad_b)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, g.map(|v| v * s)),
            Op::MulChannel { x, gate } => {
                let xv = self.value(*x);
                let gv = self.value(*gate);
                let [n, c, _, _] = xv.shape();
                let mut gx = g.clone();
                let mut ggate = Tensor4::zeros(gv.shape());
                for b in 0..n {
                    for ch in 0..c {
                        let s = gv.data()[b * c + ch];
                        gx.plane_slice_mut(b, ch).iter_mut().for_each(|v| *v *= s);
                        ggate.data_mut()[b * c + ch] = g
                            .plane_slice(b, ch)
                            .iter()
                            .zip(xv.plane_slice(b, ch))
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *gate, ggate);
            }
            Op::Concat(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let shape = self.value(p).shape();
                    if self.needs_grad(p) {
                        let mut gp = Tensor4::zeros(shape);
                        for n in 0..shape[0] {
                            for c in 0..shape[1] {
                                gp.plane_slice_mut(n, c).copy_from_slice(g.plane_slice(n, c0 + c));
                            }
                        }
                        self.accumulate(grads, p, gp);
                    }
                    c0 += shape[1];
                }
            }
            Op::Slice { x, start } => {
                let shape = self.value(*x).shape();
                let mut gx = Tensor4::zeros(shape);
                for n in 0..shape[0] {
                    for c in 0..g.shape()[1] {
                        gx.plane_slice_mut(n, start + c).copy_from_slice(g.plane_slice(n, c));
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::AvgPool2(x) => {
                let shape = self.value(*x).shape();
                let [n, c, _, w] = shape;
                let [_, _, oh, ow] = g.shape();
                let mut gx = Tensor4::zeros(shape);
                for b in 0..n {
                    for ch in 0..c {
                        let src = g.plane_slice(b, ch);
                        let dst = gx.plane_slice_mut(b, ch);
                        for y in 0..oh {
                            for xx in 0..ow {
                                let v = 0.25 * src[y * ow + xx];
                                let i = 2 * y * w + 2 * xx;
                                dst[i] += v;
                                dst[i + 1] += v;
                                dst[i + w] += v;
                                dst[i + w + 1] += v;
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Upsample2(x) => {
                let shape = self.value(*x).shape();
                let [n, c, _, w] = shape;
                let [_, _, oh, ow] = g.shape();
                let mut gx = Tensor4::zeros(shape);
                for b in 0..n {
                    for ch in 0..c {
                        let src = g.plane_slice(b, ch);
                        let dst = gx.plane_slice_mut(b, ch);
                        for y in 0..oh {
                            for xx in 0..ow {
                                dst[(y / 2) * w + xx / 2] += src[y * ow + xx];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Silu(x) => {
                let mut gx = g.clone();
                for (gv, &xv) in gx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    let s = sigmoid(xv);
                    *gv *= s * (1.0 + xv * (1.0 - s));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Sigmoid(x) => {
                let mut gx = g.clone();
                for (gv, &y) in gx.data_mut().iter_mut().zip(node.value.data()) {
                    *gv *= y * (1.0 - y);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::GlobalAvg(x) => {
                let shape = self.value(*x).shape();
                let mut gx = Tensor4::zeros(shape);
                let area = gx.plane_len() as f64;
                for b in 0..shape[0] {
                    for ch in 0..shape[1] {
                        let v = g.data()[b * shape[1] + ch] / area;
                        gx.plane_slice_mut(b, ch).fill(v);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                mode,
            } => {
                let [n, c, h, w] = xhat.shape();
                let count = (n * h * w) as f64;
                let gam = self.value(*gamma).data();
                let mut ggamma = Tensor4::zeros(self.value(*gamma).shape());
                let mut gbeta = Tensor4::zeros(self.value(*beta).shape());
                let mut gx = Tensor4::zeros(xhat.shape());
                for ch in 0..c {
                    let (mut sg, mut sgx) = (0.0, 0.0);
                    for b in 0..n {
                        for (gv, xh) in g.plane_slice(b, ch).iter().zip(xhat.plane_slice(b, ch)) {
                            sg += gv;
                            sgx += gv * xh;
                        }
                    }
                    ggamma.data_mut()[ch] = sgx;
                    gbeta.data_mut()[ch] = sg;
                    let k = gam[ch] * inv_std[ch];
                    for b in 0..n {
                        let gs = g.plane_slice(b, ch);
                        let xs = xhat.plane_slice(b, ch);
                        let dst = gx.plane_slice_mut(b, ch);
                        for i in 0..dst.len() {
                            dst[i] = match mode {
                                NormMode::Train => k * (gs[i] - sg / count - xs[i] * sgx / count),
                                NormMode::Eval => k * gs[i],
                            };
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *gamma, ggamma);
                self.accumulate(grads, *beta, gbeta);
            }
            Op::ReflectPad { x, pad } => {
                let shape = self.value(*x).shape();
                let [n, c, h, w] = shape;
                let [_, _, ph, pw] = g.shape();
                let mut gx = Tensor4::zeros(shape);
                for b in 0..n {
                    for ch in 0..c {
                        let src = g.plane_slice(b, ch);
                        let dst = gx.plane_slice_mut(b, ch);
                        for y in 0..ph {
                            let sy = reflect_index(y as isize - *pad as isize, h);
                            for xx in 0..pw {
                                dst[sy * w + reflect_index(xx as isize - *pad as isize, w)] += src[y * pw + xx];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Crop { x, pad } => {
                let shape = self.value(*x).shape();
                let [n, c, _, w] = shape;
                let [_, _, oh, ow] = g.shape();
                let mut gx = Tensor4::zeros(shape);
                for b in 0..n {
                    for ch in 0..c {
                        let src = g.plane_slice(b, ch);
                        let dst = gx.plane_slice_mut(b, ch);
                        for y in 0..oh {
                            let s = (y + pad) * w + pad;
                            dst[s..s + ow].copy_from_slice(&src[y * ow..(y + 1) * ow]);
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Clamp01(x) => {
                let mut gx = g.clone();
                for (gv, &xv) in gx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    if !(0.0..=1.0).contains(&xv) {
                        *gv = 0.0;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SmoothL1(a, b) => {
                let scale = g.data()[0] / self.value(*a).len() as f64;
                let ga = Tensor4::from_vec(
                    self.value(*a).shape(),
                    self.value(*a)
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(p, t)| scale * (p - t).clamp(-1.0, 1.0))
                        .collect(),
                )?;
                self.accumulate(grads, *b, ga.map(|v| -v));
                self.accumulate(grads, *a, ga);
            }
            Op::Mse(a, b) => {
                let scale = 2.0 * g.data()[0] / self.value(*a).len() as f64;
                let ga = Tensor4::from_vec(
                    self.value(*a).shape(),
                    self.value(*a)
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(p, t)| scale * (p - t))
                        .collect(),
                )?;
                self.accumulate(grads, *b, ga.map(|v| -v));
                self.accumulate(grads, *a, ga);
            }
            Op::NegLog { x, complement } => {
                let xv = self.value(*x);
                let scale = g.data()[0] / xv.len() as f64;
                let gx = xv.map(|s| {
                    if !(SCORE_EPS..=1.0 - SCORE_EPS).contains(&s) {
                        0.0
                    } else if *complement {
                        scale / (1.0 - s)
                    } else {
                        -scale / s
                    }
                });
                self.accumulate(grads, *x, gx);
            }
            Op::Dot { x, weights } => {
                let s = g.data()[0];
                self.accumulate(grads, *x, weights.map(|w| w * s));
            }
        }
        Ok(())
    }
}

pub fn smooth_l1_value(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let l = (p - t).abs();
            if l < 1.0 {
                0.5 * l * l
            } else {
                l - 0.5
            }
        })
        .sum();
    sum / pred.len().max(1) as f64
}

pub fn mse_value(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len().max(1) as f64
}

pub fn neg_log_value(score: f64, complement: bool) -> f64 {
    let s = score.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    if complement {
        -(1.0 - s).ln()
    } else {
        -s.ln()
    }
}
