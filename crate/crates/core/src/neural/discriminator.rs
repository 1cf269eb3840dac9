use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::conv::Padding;
use super::graph::{Graph, Var};
use super::layers::{Builder, Conv2d, LayerSpec};
use super::params::{Bound, ParamStore};
use super::tensor::Tensor4;

pub const DISC_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    /// Channels of the first layer; each following layer doubles it.
    pub width: usize,
}

impl DiscriminatorConfig {
    pub fn scaled(scale: f64) -> Self {
        Self {
            width: ((16.0 * scale).round() as usize).max(2),
        }
    }
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self::scaled(super::generator::DEFAULT_SCALE)
    }
}

/// Four stride-2 3x3 convolutions, global average and sigmoid.
#[derive(Debug, Clone)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    store: ParamStore,
    specs: Vec<LayerSpec>,
    convs: Vec<Conv2d>,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.width == 0 {
            return Err(Error::InvalidParameter("discriminator width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut specs = Vec::new();
        let mut b = Builder {
            store: &mut store,
            specs: &mut specs,
            rng: &mut rng,
        };
        let mut cin = 1;
        let mut convs = Vec::new();
        for i in 0..DISC_LAYERS {
            let cout = if i + 1 == DISC_LAYERS { 1 } else { config.width << i };
            convs.push(b.conv(&format!("disc.conv{i}"), [cout, cin, 3, 3], 2, Padding::uniform(1)));
            if i + 1 < DISC_LAYERS {
                b.activation(&format!("disc.act{i}"));
            }
            cin = cout;
        }
        Ok(Self {
            config,
            store,
            specs,
            convs,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
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

    /// Scores of shape `(n, 1, 1, 1)`, each in `(0, 1)`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let [_, c, h, w] = g.value(x).shape();
        if c != 1 {
            return Err(Error::ShapeMismatch(format!("discriminator expects one channel, got {c}")));
        }
        if h < 1 << DISC_LAYERS || w < 1 << DISC_LAYERS {
            return Err(Error::ShapeMismatch(format!("discriminator input {h}x{w} is too small")));
        }
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(g, p, h)?;
            if i + 1 < self.convs.len() {
                h = g.silu(h);
            }
        }
        let pooled = g.global_avg(h);
        Ok(g.sigmoid(pooled))
    }

    pub fn score(&self, x: &Tensor4) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let v = g.leaf(x.clone(), false);
        let s = self.forward(&mut g, &p, v)?;
        Ok(g.value(s).data().to_vec())
    }
}
