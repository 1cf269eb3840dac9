//! Fixed pseudo-random feature pyramid used by the perceptual loss.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::conv::Padding;
use super::graph::{Graph, Var};
use super::layers::{Builder, Conv2d};
use super::params::{Bound, ParamRole, ParamStore};
use super::tensor::Tensor4;

pub const FEATURE_WIDTHS: [usize; 3] = [8, 16, 32];

/// Three conv + activation stages separated by 2x average pooling. All
/// weights are frozen.
#[derive(Debug, Clone)]
pub struct FeatureBank {
    store: ParamStore,
    stages: Vec<Conv2d>,
}

impl FeatureBank {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut specs = Vec::new();
        let mut b = Builder {
            store: &mut store,
            specs: &mut specs,
            rng: &mut rng,
        };
        let mut cin = 1;
        let stages = FEATURE_WIDTHS
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let c = b.conv(&format!("stage{i}"), [cout, cin, 3, 3], 1, Padding::same(3));
                cin = cout;
                c
            })
            .collect();
        freeze(&mut store);
        Self { store, stages }
    }

    /// Loads stage weights from a tensor file in checkpoint layout with
    /// entries `stage{i}.w` (and optional `stage{i}.b`), 3x3 kernels.
    pub fn load(path: &Path) -> Result<Self> {
        let entries = super::checkpoint::read_tensor_file(path)?;
        let mut store = ParamStore::new();
        let mut stages = Vec::new();
        let mut cin = 1;
        for i in 0.. {
            let Some((_, w)) = entries.iter().find(|(n, _)| *n == format!("stage{i}.w")) else {
                break;
            };
            let s = w.shape();
            if s[1] != cin || s[2] != 3 || s[3] != 3 {
                return Err(Error::ShapeMismatch(format!("feature stage {i} has kernel {s:?}")));
            }
            let wid = store.add(format!("stage{i}.w"), w.clone(), ParamRole::Frozen);
            let b = entries
                .iter()
                .find(|(n, _)| *n == format!("stage{i}.b"))
                .map(|(_, b)| store.add(format!("stage{i}.b"), b.clone(), ParamRole::Frozen));
            stages.push(Conv2d {
                w: wid,
                b,
                stride: 1,
                pad: Padding::same(3),
            });
            cin = s[0];
        }
        if stages.is_empty() {
            return Err(Error::Checkpoint(format!("{} holds no feature stages", path.display())));
        }
        Ok(Self { store, stages })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        self.store.bind(g, false)
    }

    /// Activations after each stage.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Vec<Var>> {
        let mut out = Vec::new();
        let mut h = x;
        for (i, stage) in self.stages.iter().enumerate() {
            if i > 0 {
                h = g.avg_pool2(h)?;
            }
            let y = stage.forward(g, p, h)?;
            h = g.silu(y);
            out.push(h);
        }
        Ok(out)
    }

    /// Sum over stages of the mean squared feature difference.
    pub fn loss(&self, g: &mut Graph, p: &Bound, pred: Var, target: Var) -> Result<Var> {
        let fp = self.forward(g, p, pred)?;
        let ft = self.forward(g, p, target)?;
        let mut total: Option<Var> = None;
        for (a, b) in fp.into_iter().zip(ft) {
            let l = g.mse(a, b)?;
            total = Some(match total {
                Some(t) => g.add(t, l)?,
                None => l,
            });
        }
        Ok(total.expect("at least one stage"))
    }
}

fn freeze(store: &mut ParamStore) {
    let mut frozen = ParamStore::new();
    for p in store.params() {
        frozen.add(p.name.clone(), p.value.clone(), ParamRole::Frozen);
    }
    *store = frozen;
}

/// Perceptual loss between two single-channel batches.
pub fn feature_loss(pred: &Tensor4, target: &Tensor4, bank: &FeatureBank) -> Result<f64> {
    let mut g = Graph::new();
    let p = bank.bind(&mut g);
    let a = g.leaf(pred.clone(), false);
    let b = g.leaf(target.clone(), false);
    let l = bank.loss(&mut g, &p, a, b)?;
    Ok(g.value(l).data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_vec([2, 1, 16, 16], (0..512).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn zero_for_equal_symmetric_positive_otherwise() {
        let bank = FeatureBank::seeded(0);
        let (a, b) = (random(1), random(2));
        assert_eq!(feature_loss(&a, &a, &bank).unwrap(), 0.0);
        let ab = feature_loss(&a, &b, &bank).unwrap();
        assert!(ab > 0.0);
        assert_eq!(ab, feature_loss(&b, &a, &bank).unwrap());
    }

    #[test]
    fn positive_across_many_banks() {
        for seed in 0..100 {
            let bank = FeatureBank::seeded(seed);
            assert!(feature_loss(&random(seed + 1000), &random(seed + 2000), &bank).unwrap() > 0.0);
        }
    }

    #[test]
    fn bank_is_frozen() {
        let bank = FeatureBank::seeded(4);
        assert_eq!(bank.params().trainable_count(), 0);
        assert_eq!(bank.params().len(), 6);
    }
}
