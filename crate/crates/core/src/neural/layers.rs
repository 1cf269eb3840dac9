//! Reusable blocks shared by the generator, discriminator and feature bank.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::conv::Padding;
use super::graph::{BatchStats, Graph, NormMode, Var};
use super::params::{Bound, ParamId, ParamRole, ParamStore};
use super::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Downsample,
    Upsample,
    DenseBlock,
    AttentionGate,
    Activation,
    BatchNorm,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "CONV",
            LayerKind::Downsample => "DOWNSAMPLE",
            LayerKind::Upsample => "UPSAMPLE",
            LayerKind::DenseBlock => "DENSE_BLOCK",
            LayerKind::AttentionGate => "ATTENTION_GATE",
            LayerKind::Activation => "ACTIVATION",
            LayerKind::BatchNorm => "BATCHNORM",
        }
    }
}

/// Descriptor of one layer in a network, in construction order.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// `(out_ch, in_ch, kh, kw)` for convolutions.
    pub kernel: Option<[usize; 4]>,
    pub trainable: bool,
}

/// Allocates parameters and records layer specs while a network is built.
pub struct Builder<'a> {
    pub store: &'a mut ParamStore,
    pub specs: &'a mut Vec<LayerSpec>,
    pub rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn spec(&mut self, name: &str, kind: LayerKind, kernel: Option<[usize; 4]>, trainable: bool) {
        self.specs.push(LayerSpec {
            name: name.to_string(),
            kind,
            kernel,
            trainable,
        });
    }

    /// Randomly initialized trainable convolution with bias.
    pub fn conv(&mut self, name: &str, kernel: [usize; 4], stride: usize, pad: Padding) -> Conv2d {
        let w = self.store.add_uniform(format!("{name}.w"), kernel, self.rng);
        let b = self
            .store
            .add(format!("{name}.b"), Tensor4::zeros([1, kernel[0], 1, 1]), ParamRole::Trainable);
        self.spec(name, LayerKind::Conv, Some(kernel), true);
        Conv2d {
            w,
            b: Some(b),
            stride,
            pad,
        }
    }

    /// Convolution with caller-supplied weights and no bias.
    pub fn conv_fixed(&mut self, name: &str, weights: Tensor4, role: ParamRole, pad: Padding) -> Conv2d {
        let kernel = weights.shape();
        let w = self.store.add(format!("{name}.w"), weights, role);
        self.spec(name, LayerKind::Conv, Some(kernel), role == ParamRole::Trainable);
        Conv2d {
            w,
            b: None,
            stride: 1,
            pad,
        }
    }

    pub fn activation(&mut self, name: &str) {
        self.spec(name, LayerKind::Activation, None, false);
    }

    pub fn dense_block(&mut self, name: &str, channels: usize, growth: usize, layers: usize) -> DenseBlock {
        self.spec(name, LayerKind::DenseBlock, None, true);
        let convs = (0..layers - 1)
            .map(|i| {
                let c = self.conv(
                    &format!("{name}.conv{i}"),
                    [growth, channels + i * growth, 3, 3],
                    1,
                    Padding::same(3),
                );
                self.activation(&format!("{name}.act{i}"));
                c
            })
            .collect::<Vec<_>>();
        let fuse = self.conv(
            &format!("{name}.fuse"),
            [channels, channels + (layers - 1) * growth, 1, 1],
            1,
            Padding::NONE,
        );
        DenseBlock { convs, fuse }
    }

    pub fn gate(&mut self, name: &str, channels: usize) -> AttentionGate {
        self.spec(name, LayerKind::AttentionGate, None, true);
        AttentionGate {
            conv: self.conv(&format!("{name}.fc"), [channels, channels, 1, 1], 1, Padding::NONE),
        }
    }

    pub fn down(&mut self, name: &str, cin: usize, cout: usize) -> Resample {
        self.spec(name, LayerKind::Downsample, None, true);
        let conv = self.conv(&format!("{name}.conv"), [cout, cin, 3, 3], 1, Padding::same(3));
        self.activation(&format!("{name}.act"));
        Resample { conv, up: false }
    }

    pub fn up(&mut self, name: &str, cin: usize, cout: usize) -> Resample {
        self.spec(name, LayerKind::Upsample, None, true);
        let conv = self.conv(&format!("{name}.conv"), [cout, cin, 3, 3], 1, Padding::same(3));
        self.activation(&format!("{name}.act"));
        Resample { conv, up: true }
    }

    /// 3x3 convolution, batch norm and activation.
    pub fn conv_bn(&mut self, name: &str, cin: usize, cout: usize) -> ConvBn {
        let conv = self.conv(&format!("{name}.conv"), [cout, cin, 3, 3], 1, Padding::same(3));
        self.spec(&format!("{name}.bn"), LayerKind::BatchNorm, None, true);
        let gamma = self
            .store
            .add(format!("{name}.bn.gamma"), Tensor4::full([1, cout, 1, 1], 1.0), ParamRole::Trainable);
        let beta = self
            .store
            .add(format!("{name}.bn.beta"), Tensor4::zeros([1, cout, 1, 1]), ParamRole::Trainable);
        let running_mean = self
            .store
            .add(format!("{name}.bn.running_mean"), Tensor4::zeros([1, cout, 1, 1]), ParamRole::Buffer);
        let running_var = self
            .store
            .add(format!("{name}.bn.running_var"), Tensor4::full([1, cout, 1, 1], 1.0), ParamRole::Buffer);
        self.activation(&format!("{name}.act"));
        ConvBn {
            conv,
            gamma,
            beta,
            running_mean,
            running_var,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: usize,
    pub pad: Padding,
}

impl Conv2d {
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p.var(self.w), self.b.map(|b| p.var(b)), self.stride, self.pad)
    }

    /// Sets weights (and bias) to zero.
    pub fn zero(&self, store: &mut ParamStore) {
        store.value_mut(self.w).data_mut().fill(0.0);
        if let Some(b) = self.b {
            store.value_mut(b).data_mut().fill(0.0);
        }
    }
}

/// Densely connected convolutions whose outputs are fused back onto the
/// input by a 1x1 convolution: `x + fuse([x, y1, .., yk])`.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    pub convs: Vec<Conv2d>,
    pub fuse: Conv2d,
}

impl DenseBlock {
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let mut feats = vec![x];
        for conv in &self.convs {
            let input = if feats.len() == 1 { x } else { g.concat(&feats)? };
            let y = conv.forward(g, p, input)?;
            feats.push(g.silu(y));
        }
        let all = g.concat(&feats)?;
        let fused = self.fuse.forward(g, p, all)?;
        g.add(x, fused)
    }
}

/// Per-channel gate `x * sigmoid(W gap(x) + b)`.
#[derive(Debug, Clone)]
pub struct AttentionGate {
    pub conv: Conv2d,
}

impl AttentionGate {
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let pooled = g.global_avg(x);
        let logits = self.conv.forward(g, p, pooled)?;
        let gate = g.sigmoid(logits);
        g.mul_channel(x, gate)
    }
}

/// Average-pool down or nearest-neighbour up, then convolution and
/// activation.
#[derive(Debug, Clone)]
pub struct Resample {
    pub conv: Conv2d,
    pub up: bool,
}

impl Resample {
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let moved = if self.up { g.upsample2(x) } else { g.avg_pool2(x)? };
        let y = self.conv.forward(g, p, moved)?;
        Ok(g.silu(y))
    }
}

#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

/// Batch statistics to fold into a layer's running estimates.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub stats: BatchStats,
}

pub const BN_MOMENTUM: f64 = 0.1;

impl BnUpdate {
    pub fn apply(&self, store: &mut ParamStore) {
        for (r, b) in store
            .value_mut(self.running_mean)
            .data_mut()
            .iter_mut()
            .zip(&self.stats.mean)
        {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, b) in store
            .value_mut(self.running_var)
            .data_mut()
            .iter_mut()
            .zip(&self.stats.var)
        {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}

impl ConvBn {
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        store: &ParamStore,
        x: Var,
        mode: NormMode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<Var> {
        let y = self.conv.forward(g, p, x)?;
        let running = (
            store.value(self.running_mean).data(),
            store.value(self.running_var).data(),
        );
        let (y, stats) = g.batch_norm(y, p.var(self.gamma), p.var(self.beta), mode, Some(running))?;
        if let Some(stats) = stats {
            updates.push(BnUpdate {
                running_mean: self.running_mean,
                running_var: self.running_var,
                stats,
            });
        }
        Ok(g.silu(y))
    }
}
