//! Two-branch generator operating on the Krawtchouk moment cube.
//!
//! The luma input is reflect-padded by one block, mapped to 64 moment
//! planes by a frozen sliding convolution, split into low- and
//! high-frequency groups, corrected by one branch each, merged and mapped
//! back to pixels by a trainable 64-to-1 convolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::krawtchouk::{BasisSet, BANDS, BLOCK};
use crate::transform::check_threshold;

use super::conv::Padding;
use super::graph::{Graph, NormMode, Var};
use super::layers::{AttentionGate, BnUpdate, Builder, Conv2d, ConvBn, DenseBlock, LayerKind, LayerSpec, Resample};
use super::params::{Bound, ParamRole, ParamStore};
use super::tensor::Tensor4;

/// Reflection margin added around the input before the moment transform.
pub const INPUT_MARGIN: usize = BLOCK;
pub const DEFAULT_SCALE: f64 = 0.25;
pub const DEFAULT_THRESHOLD: usize = 60;
/// Smallest accepted input side.
pub const MIN_INPUT: usize = 16;
/// Step-size multiplier for the inverse-transform kernel. Its entries are
/// around 1/64 in magnitude, so full-size Adam steps would wreck the
/// initial inverse within a few updates.
pub const IKCL_LR_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Bands `0..t_split` go to the low branch, the rest to the high branch.
    pub t_split: usize,
    pub p: f64,
    /// Channels of the top grid row; row `r` has `low_width << r`.
    pub low_width: usize,
    /// Dense-block growth rate of the top row.
    pub growth: usize,
    pub rows: usize,
    pub columns: usize,
    /// Convolutions per dense block, including the 1x1 fuse layer.
    pub dense_layers: usize,
    /// Base width of the high-branch encoder-decoder.
    pub high_width: usize,
    /// Number of encoder (and decoder) stages in the high branch.
    pub high_depth: usize,
    /// Zero the last layer of both branches so the network starts as an
    /// exact reconstructor.
    pub identity_init: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::scaled(DEFAULT_SCALE)
    }
}

fn scaled_width(base: f64, scale: f64, min: usize) -> usize {
    ((base * scale).round() as usize).max(min)
}

impl GeneratorConfig {
    /// Widths 16 (low), 8 (growth) and 8 (high) multiplied by `scale`.
    pub fn scaled(scale: f64) -> Self {
        Self {
            t_split: DEFAULT_THRESHOLD,
            p: 0.5,
            low_width: scaled_width(16.0, scale, 2),
            growth: scaled_width(8.0, scale, 1),
            rows: 3,
            columns: 6,
            dense_layers: 5,
            high_width: scaled_width(8.0, scale, 2),
            high_depth: 4,
            identity_init: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_threshold(self.t_split)?;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(1..=4).contains(&self.rows) {
            return bad(format!("rows must be 1..=4, got {}", self.rows));
        }
        if self.columns < 2 || self.columns % 2 != 0 {
            return bad(format!("columns must be even and at least 2, got {}", self.columns));
        }
        if self.dense_layers < 2 {
            return bad("dense blocks need at least 2 layers".into());
        }
        if !(1..=4).contains(&self.high_depth) {
            return bad(format!("high_depth must be 1..=4, got {}", self.high_depth));
        }
        if self.low_width == 0 || self.growth == 0 || self.high_width == 0 {
            return bad("widths must be positive".into());
        }
        Ok(())
    }

    pub fn high_bands(&self) -> usize {
        BANDS - self.t_split
    }
}

/// Pyramidal grid of dense blocks with attention-gated fusion.
#[derive(Debug, Clone)]
struct LowBranch {
    head: Conv2d,
    /// `lateral[r][c]` connects column `c` to `c + 1` on row `r`.
    lateral: Vec<Vec<DenseBlock>>,
    /// Cross-row block entering node `(r, c)`, if any.
    cross: Vec<Vec<Option<Resample>>>,
    /// Gates on the lateral and cross inputs of node `(r, c)`.
    gates: Vec<Vec<Option<(AttentionGate, AttentionGate)>>>,
    tail: Conv2d,
    rows: usize,
    columns: usize,
}

impl LowBranch {
    fn build(b: &mut Builder, cfg: &GeneratorConfig) -> Self {
        let (rows, cols) = (cfg.rows, cfg.columns);
        let half = cols / 2;
        let width = |r: usize| cfg.low_width << r;
        let head = b.conv("low.head", [width(0), cfg.t_split, 1, 1], 1, Padding::NONE);
        b.activation("low.head.act");
        let mut lateral = Vec::new();
        let mut cross = Vec::new();
        let mut gates = Vec::new();
        for r in 0..rows {
            lateral.push(
                (1..cols)
                    .map(|c| b.dense_block(&format!("low.r{r}.c{c}.dense"), width(r), cfg.growth << r, cfg.dense_layers))
                    .collect(),
            );
            let mut cross_row = Vec::new();
            let mut gate_row = Vec::new();
            for c in 0..cols {
                let block = if c < half && r > 0 {
                    Some(b.down(&format!("low.r{r}.c{c}.down"), width(r - 1), width(r)))
                } else if c >= half && r + 1 < rows {
                    Some(b.up(&format!("low.r{r}.c{c}.up"), width(r + 1), width(r)))
                } else {
                    None
                };
                let gate = (block.is_some() && c > 0).then(|| {
                    (
                        b.gate(&format!("low.r{r}.c{c}.gate_lateral"), width(r)),
                        b.gate(&format!("low.r{r}.c{c}.gate_cross"), width(r)),
                    )
                });
                cross_row.push(block);
                gate_row.push(gate);
            }
            cross.push(cross_row);
            gates.push(gate_row);
        }
        let tail = b.conv("low.tail", [cfg.t_split, width(0), 1, 1], 1, Padding::NONE);
        Self {
            head,
            lateral,
            cross,
            gates,
            tail,
            rows,
            columns: cols,
        }
    }

    fn node(&self, g: &mut Graph, p: &Bound, r: usize, c: usize, lateral: Option<Var>, cross: Option<Var>) -> Result<Var> {
        match (lateral, cross) {
            (Some(a), Some(b)) => {
                let (ga, gb) = self.gates[r][c].as_ref().expect("gate at fusion node");
                let a = ga.forward(g, p, a)?;
                let b = gb.forward(g, p, b)?;
                g.add(a, b)
            }
            (Some(v), None) | (None, Some(v)) => Ok(v),
            (None, None) => unreachable!("every grid node has an input"),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let half = self.columns / 2;
        let h = self.head.forward(g, p, x)?;
        let h = g.silu(h);
        let mut grid: Vec<Vec<Option<Var>>> = vec![vec![None; self.columns]; self.rows];
        for c in 0..self.columns {
            let order: Vec<usize> = if c < half {
                (0..self.rows).collect()
            } else {
                (0..self.rows).rev().collect()
            };
            for r in order {
                let lateral = if c == 0 {
                    (r == 0).then_some(h)
                } else {
                    let prev = grid[r][c - 1].expect("filled");
                    Some(self.lateral[r][c - 1].forward(g, p, prev)?)
                };
                let cross = match &self.cross[r][c] {
                    Some(block) => {
                        let src = if c < half { grid[r - 1][c] } else { grid[r + 1][c] };
                        Some(block.forward(g, p, src.expect("filled"))?)
                    }
                    None => None,
                };
                grid[r][c] = Some(self.node(g, p, r, c, lateral, cross)?);
            }
        }
        let top = grid[0][self.columns - 1].expect("filled");
        self.tail.forward(g, p, top)
    }
}

/// Encoder-decoder with skip connections and batch norm.
#[derive(Debug, Clone)]
struct HighBranch {
    encoders: Vec<ConvBn>,
    /// Decoders from the deepest level up; all but the last take a skip.
    decoders: Vec<ConvBn>,
    tail: Conv2d,
}

impl HighBranch {
    fn build(b: &mut Builder, cfg: &GeneratorConfig) -> Self {
        let bands = cfg.high_bands();
        let w = |k: usize| cfg.high_width << k;
        let encoders = (0..cfg.high_depth)
            .map(|k| b.conv_bn(&format!("high.enc{k}"), if k == 0 { bands } else { w(k - 1) }, w(k)))
            .collect();
        let mut decoders: Vec<ConvBn> = (0..cfg.high_depth - 1)
            .rev()
            .map(|k| b.conv_bn(&format!("high.dec{k}"), w(k + 1) + w(k), w(k)))
            .collect();
        decoders.push(b.conv_bn("high.out", w(0), w(0)));
        let tail = b.conv("high.tail", [bands, w(0), 1, 1], 1, Padding::NONE);
        Self {
            encoders,
            decoders,
            tail,
        }
    }

    fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        store: &ParamStore,
        x: Var,
        mode: NormMode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<Var> {
        let mut skips = Vec::new();
        let mut h = x;
        for (k, enc) in self.encoders.iter().enumerate() {
            if k > 0 {
                h = g.avg_pool2(h)?;
            }
            h = enc.forward(g, p, store, h, mode, updates)?;
            skips.push(h);
        }
        skips.pop();
        let last = self.decoders.len() - 1;
        for (i, dec) in self.decoders.iter().enumerate() {
            if i < last {
                let up = g.upsample2(h);
                let skip = skips.pop().expect("one skip per decoder");
                h = g.concat(&[up, skip])?;
            }
            h = dec.forward(g, p, store, h, mode, updates)?;
        }
        self.tail.forward(g, p, h)
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    store: ParamStore,
    specs: Vec<LayerSpec>,
    kcl: Conv2d,
    ikcl: Conv2d,
    low: LowBranch,
    high: HighBranch,
}

/// Result of a forward pass.
#[derive(Debug)]
pub struct GeneratorOutput {
    pub output: Var,
    /// Running-statistic updates from training-mode batch norm.
    pub bn_updates: Vec<BnUpdate>,
}

/// KCL filters as a `(64, 1, 8, 8)` kernel.
pub fn kcl_weights(basis: &BasisSet) -> Tensor4 {
    let data = basis.filters().iter().flat_map(|f| f.iter().copied()).collect();
    Tensor4::from_vec([BANDS, 1, BLOCK, BLOCK], data).expect("64 filters of 8x8")
}

/// `(1, 64, 8, 8)` kernel that exactly inverts the sliding KCL when used
/// with padding (4, 4, 3, 3): each filter rotated by 180 degrees and
/// divided by the number of overlapping windows.
pub fn ikcl_inverse_weights(basis: &BasisSet) -> Tensor4 {
    let mut out = Tensor4::zeros([1, BANDS, BLOCK, BLOCK]);
    let norm = (BLOCK * BLOCK) as f64;
    for (k, f) in basis.filters().iter().enumerate() {
        for u in 0..BLOCK {
            for v in 0..BLOCK {
                out.set([0, k, u, v], f[[BLOCK - 1 - u, BLOCK - 1 - v]] / norm);
            }
        }
    }
    out
}

/// Padding under which [`ikcl_inverse_weights`] inverts the KCL.
pub const IKCL_PADDING: Padding = Padding {
    top: BLOCK / 2,
    left: BLOCK / 2,
    bottom: BLOCK / 2 - 1,
    right: BLOCK / 2 - 1,
};

impl Generator {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let basis = BasisSet::with_p(config.p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut specs = Vec::new();
        let mut b = Builder {
            store: &mut store,
            specs: &mut specs,
            rng: &mut rng,
        };
        let kcl = b.conv_fixed("kcl", kcl_weights(&basis), ParamRole::Frozen, Padding::same(BLOCK));
        let low = LowBranch::build(&mut b, &config);
        let high = HighBranch::build(&mut b, &config);
        let ikcl = b.conv_fixed("ikcl", ikcl_inverse_weights(&basis), ParamRole::Trainable, IKCL_PADDING);
        store.set_lr_scale(ikcl.w, IKCL_LR_SCALE);
        if config.identity_init {
            low.tail.zero(&mut store);
            high.tail.zero(&mut store);
        }
        Ok(Self {
            config,
            store,
            specs,
            kcl,
            ikcl,
            low,
            high,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Number of convolution layers whose name starts with `prefix`.
    pub fn conv_count(&self, prefix: &str) -> usize {
        self.specs
            .iter()
            .filter(|s| s.kind == LayerKind::Conv && s.name.starts_with(prefix))
            .count()
    }

    pub fn kcl(&self) -> &Conv2d {
        &self.kcl
    }

    pub fn ikcl(&self) -> &Conv2d {
        &self.ikcl
    }

    /// The last layer of each branch, zero at identity initialization.
    pub fn branch_tails(&self) -> [&Conv2d; 2] {
        [&self.low.tail, &self.high.tail]
    }

    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        let [_, c, h, w] = shape;
        if c != 1 {
            return Err(Error::ShapeMismatch(format!("generator expects one channel, got {c}")));
        }
        if h < MIN_INPUT || w < MIN_INPUT || h % BLOCK != 0 || w % BLOCK != 0 {
            return Err(Error::ShapeMismatch(format!(
                "generator input must be at least {MIN_INPUT}x{MIN_INPUT} and divisible by {BLOCK}, got {h}x{w}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, input: Var, mode: NormMode) -> Result<GeneratorOutput> {
        self.check_input(g.value(input).shape())?;
        let t = self.config.t_split;
        let mut bn_updates = Vec::new();
        let padded = g.reflect_pad(input, INPUT_MARGIN)?;
        let cube = self.kcl.forward(g, p, padded)?;
        let low_in = g.slice_channels(cube, 0, t)?;
        let high_in = g.slice_channels(cube, t, BANDS)?;
        let low_delta = self.low.forward(g, p, low_in)?;
        let low = g.add(low_in, low_delta)?;
        let high_delta = self.high.forward(g, p, &self.store, high_in, mode, &mut bn_updates)?;
        let high = g.add(high_in, high_delta)?;
        let merged = g.concat(&[low, high])?;
        let recon = self.ikcl.forward(g, p, merged)?;
        let cropped = g.crop(recon, INPUT_MARGIN)?;
        Ok(GeneratorOutput {
            output: g.clamp01(cropped),
            bn_updates,
        })
    }

    /// Evaluation-mode forward pass without gradients.
    pub fn infer(&self, input: &Tensor4) -> Result<Tensor4> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let x = g.leaf(input.clone(), false);
        let out = self.forward(&mut g, &p, x, NormMode::Eval)?;
        Ok(g.value(out.output).clone())
    }

    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate]) {
        for u in updates {
            u.apply(&mut self.store);
        }
    }
}
