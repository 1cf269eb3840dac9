//! Finite-difference verification of backpropagated gradients.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::conv::Padding;
use super::discriminator::{Discriminator, DiscriminatorConfig};
use super::features::FeatureBank;
use super::generator::{Generator, GeneratorConfig};
use super::graph::{Graph, NormMode, Var};
use super::layers::{Builder, LayerKind};
use super::params::{Bound, ParamId, ParamRole, ParamStore};
use super::tensor::Tensor4;

pub const DEFAULT_EPS: f64 = 1e-4;
/// Tolerance for fragments that are linear in every parameter.
pub const LINEAR_TOLERANCE: f64 = 1e-6;
pub const NONLINEAR_TOLERANCE: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely rather than
/// relatively.
pub const REL_FLOOR: f64 = 1e-6;
/// The floor also rises to this fraction of the fragment's largest gradient,
/// below which central differences are dominated by round-off in the loss.
pub const SCALE_FLOOR: f64 = 1e-4;

type Forward = Box<dyn Fn(&mut Graph, &Bound) -> Result<Var>>;

/// A parameterized computation whose output is reduced to a scalar by a
/// fixed random projection before checking.
pub struct Fragment {
    pub name: String,
    pub linear: bool,
    pub store: ParamStore,
    pub forward: Forward,
}

impl Fragment {
    pub fn tolerance(&self) -> f64 {
        if self.linear {
            LINEAR_TOLERANCE
        } else {
            NONLINEAR_TOLERANCE
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub fragment: String,
    pub linear: bool,
    pub checked: usize,
    /// Tensors skipped because they are frozen.
    pub excluded: usize,
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: String,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_floored(analytic, numeric, REL_FLOOR)
}

fn relative_error_floored(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn projected_loss(g: &mut Graph, out: Var, weights: &Tensor4) -> Result<Var> {
    g.dot(out, weights.clone())
}

/// Compares analytic and central-difference gradients for every trainable
/// tensor of `frag`, sampling at most `per_tensor` entries of each.
pub fn gradient_check(frag: &Fragment, eps: f64, per_tensor: Option<usize>, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let bound = frag.store.bind(&mut g, true);
    let out = (frag.forward)(&mut g, &bound)?;
    let shape = g.value(out).shape();
    let n: usize = shape.iter().product();
    let weights = Tensor4::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let loss = projected_loss(&mut g, out, &weights)?;
    let mut grads = g.backward(loss)?;
    let analytic = bound.gradients(&mut grads);
    drop(g);
    let largest = frag
        .store
        .params()
        .iter()
        .zip(&analytic)
        .filter(|(p, _)| p.role == ParamRole::Trainable)
        .filter_map(|(_, a)| a.as_ref().map(Tensor4::max_abs))
        .fold(0.0, f64::max);
    let floor = REL_FLOOR.max(SCALE_FLOOR * largest);

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let b = store.bind(&mut g, false);
        let out = (frag.forward)(&mut g, &b)?;
        let l = projected_loss(&mut g, out, &weights)?;
        Ok(g.value(l).data()[0])
    };

    let mut work = frag.store.clone();
    let mut report = GradCheckReport {
        fragment: frag.name.clone(),
        linear: frag.linear,
        checked: 0,
        excluded: 0,
        max_rel_error: 0.0,
        worst: String::new(),
        tolerance: frag.tolerance(),
    };
    for (i, param) in frag.store.params().iter().enumerate() {
        match param.role {
            ParamRole::Trainable => {}
            ParamRole::Frozen => {
                report.excluded += 1;
                continue;
            }
            ParamRole::Buffer => continue,
        }
        let len = param.value.len();
        let entries: Vec<usize> = match per_tensor {
            Some(k) if k < len => {
                let mut idx = sample(&mut rng, len, k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..len).collect(),
        };
        for e in entries {
            let a = analytic[i].as_ref().map_or(0.0, |t| t.data()[e]);
            let orig = param.value.data()[e];
            work.value_mut(ParamId(i)).data_mut()[e] = orig + eps;
            let plus = eval(&work)?;
            work.value_mut(ParamId(i)).data_mut()[e] = orig - eps;
            let minus = eval(&work)?;
            work.value_mut(ParamId(i)).data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error_floored(a, numeric, floor);
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err;
                report.worst = format!("{}[{e}]", param.name);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

fn random_tensor(shape: [usize; 4], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor4 {
    let n = shape.iter().product();
    Tensor4::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape")
}

/// Store with a trainable input tensor, plus a builder over it.
fn fragment_store(seed: u64, input: [usize; 4]) -> (ParamStore, ParamId, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let x = store.add("input", random_tensor(input, -1.0, 1.0, &mut rng), ParamRole::Trainable);
    (store, x, rng)
}

fn randomize_biases(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for i in 0..store.len() {
        let p = &store.params()[i];
        if p.role == ParamRole::Trainable && (p.name.ends_with(".b") || p.name.ends_with(".beta")) {
            let shape = p.value.shape();
            store.value_mut(ParamId(i)).data_mut().copy_from_slice(random_tensor(shape, -0.5, 0.5, rng).data());
        }
    }
}

/// One fragment per layer kind, per loss and for the complete generator and
/// discriminator at the given width scale and input side.
pub fn standard_fragments(seed: u64, scale: f64, side: usize) -> Result<Vec<Fragment>> {
    let mut frags = Vec::new();

    for (name, stride, pad, k) in [
        ("conv3x3", 1, Padding::same(3), 3),
        ("conv_stride2", 2, Padding::uniform(1), 3),
        ("conv8x8_asym", 1, Padding::same(8), 8),
    ] {
        let (mut store, x, mut rng) = fragment_store(seed, [2, 3, 9, 10]);
        let mut specs = Vec::new();
        let conv = Builder {
            store: &mut store,
            specs: &mut specs,
            rng: &mut rng,
        }
        .conv("conv", [4, 3, k, k], stride, pad);
        randomize_biases(&mut store, &mut rng);
        frags.push(Fragment {
            name: name.into(),
            linear: true,
            store,
            forward: Box::new(move |g, p| conv.forward(g, p, p.var(x))),
        });
    }

    {
        // Frozen moment transform followed by a trainable inverse.
        let (mut store, x, _) = fragment_store(seed, [1, 1, 16, 16]);
        let basis = crate::krawtchouk::BasisSet::with_p(0.5)?;
        let kcl = store.add("kcl", super::generator::kcl_weights(&basis), ParamRole::Frozen);
        let ikcl = store.add("ikcl", super::generator::ikcl_inverse_weights(&basis), ParamRole::Trainable);
        frags.push(Fragment {
            name: "kcl_ikcl".into(),
            linear: true,
            store,
            forward: Box::new(move |g, p| {
                let cube = g.conv2d(p.var(x), p.var(kcl), None, 1, Padding::same(8))?;
                g.conv2d(cube, p.var(ikcl), None, 1, super::generator::IKCL_PADDING)
            }),
        });
    }

    for (name, kind) in [
        ("downsample", LayerKind::Downsample),
        ("upsample", LayerKind::Upsample),
        ("dense_block", LayerKind::DenseBlock),
        ("attention_gate", LayerKind::AttentionGate),
        ("batchnorm", LayerKind::BatchNorm),
    ] {
        let (mut store, x, mut rng) = fragment_store(seed.wrapping_add(kind as u64), [2, 4, 8, 8]);
        let mut specs = Vec::new();
        let mut b = Builder {
            store: &mut store,
            specs: &mut specs,
            rng: &mut rng,
        };
        let forward: Forward = match kind {
            LayerKind::Downsample => {
                let l = b.down("down", 4, 6);
                Box::new(move |g, p| l.forward(g, p, p.var(x)))
            }
            LayerKind::Upsample => {
                let l = b.up("up", 4, 3);
                Box::new(move |g, p| l.forward(g, p, p.var(x)))
            }
            LayerKind::DenseBlock => {
                let l = b.dense_block("dense", 4, 2, 5);
                Box::new(move |g, p| l.forward(g, p, p.var(x)))
            }
            LayerKind::AttentionGate => {
                let l = b.gate("gate", 4);
                Box::new(move |g, p| l.forward(g, p, p.var(x)))
            }
            _ => {
                let l = b.conv_bn("enc", 4, 3);
                let store_copy = b.store.clone();
                Box::new(move |g, p| l.forward(g, p, &store_copy, p.var(x), NormMode::Train, &mut Vec::new()))
            }
        };
        randomize_biases(&mut store, &mut rng);
        frags.push(Fragment {
            name: name.into(),
            linear: false,
            store,
            forward,
        });
    }

    for (name, act) in [("silu", 0), ("sigmoid", 1)] {
        let (store, x, _) = fragment_store(seed, [2, 2, 5, 5]);
        frags.push(Fragment {
            name: name.into(),
            linear: false,
            store,
            forward: Box::new(move |g, p| Ok(if act == 0 { g.silu(p.var(x)) } else { g.sigmoid(p.var(x)) })),
        });
    }

    {
        let (mut store, x, mut rng) = fragment_store(seed, [2, 1, 16, 16]);
        let target = random_tensor([2, 1, 16, 16], 0.0, 1.0, &mut rng);
        let scores = store.add("scores", random_tensor([4, 1, 1, 1], 0.05, 0.95, &mut rng), ParamRole::Trainable);
        let bank = FeatureBank::seeded(seed);
        frags.push(Fragment {
            name: "losses".into(),
            linear: false,
            store,
            forward: Box::new(move |g, p| {
                let t = g.leaf(target.clone(), false);
                let fb = bank.bind(g);
                let terms = [
                    g.smooth_l1(p.var(x), t)?,
                    g.mse(p.var(x), t)?,
                    bank.loss(g, &fb, p.var(x), t)?,
                    g.neg_log(p.var(scores), false),
                    g.neg_log(p.var(scores), true),
                ];
                let all = g.concat(&terms)?;
                Ok(all)
            }),
        });
    }

    {
        let mut cfg = GeneratorConfig::scaled(scale);
        cfg.identity_init = false;
        let mut gen = Generator::new(cfg, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1);
        randomize_biases(gen.params_mut(), &mut rng);
        let input = random_tensor([2, 1, side, side], 0.3, 0.7, &mut rng);
        let store = gen.params().clone();
        frags.push(Fragment {
            name: "generator".into(),
            linear: false,
            store,
            forward: Box::new(move |g, p| {
                let x = g.leaf(input.clone(), false);
                Ok(gen.forward(g, p, x, NormMode::Train)?.output)
            }),
        });
    }

    {
        let disc = Discriminator::new(DiscriminatorConfig::scaled(scale), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD2);
        let input = random_tensor([2, 1, side, side], 0.0, 1.0, &mut rng);
        let mut store = disc.params().clone();
        randomize_biases(&mut store, &mut rng);
        frags.push(Fragment {
            name: "discriminator".into(),
            linear: false,
            store,
            forward: Box::new(move |g, p| {
                let x = g.leaf(input.clone(), false);
                disc.forward(g, p, x)
            }),
        });
    }
    Ok(frags)
}

/// `fragment,linear,checked,excluded,max_rel_error,tolerance,pass` rows.
pub fn reports_csv(reports: &[GradCheckReport]) -> String {
    let mut out = String::from("fragment,linear,checked,excluded,max_rel_error,tolerance,pass\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{:e},{:e},{}",
            r.fragment,
            r.linear,
            r.checked,
            r.excluded,
            r.max_rel_error,
            r.tolerance,
            r.passed()
        );
    }
    out
}
