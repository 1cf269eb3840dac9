//! Alternating adversarial training and model persistence.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::plane::Plane;

use super::adam::{adam_step, AdamConfig, Moments};
use super::checkpoint::TensorFile;
use super::discriminator::{Discriminator, DiscriminatorConfig};
use super::features::FeatureBank;
use super::generator::{Generator, GeneratorConfig};
use super::graph::{Graph, NormMode, Var};
use super::loss::LossWeights;
use super::params::{ParamId, ParamRole, ParamStore};
use super::tensor::Tensor4;

pub const LOSS_LOG_HEADER: &str = "step,loss_total,loss_l1,loss_mse,loss_feat,loss_g,loss_d";

/// Distinct, reproducible seeds for each randomly initialized component.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GEN_STREAM: u64 = 1;
const DISC_STREAM: u64 = 2;
const FEATURE_STREAM: u64 = 3;
pub const SHUFFLE_STREAM: u64 = 4;

/// Feature bank implied by a run seed.
pub fn feature_bank_for_seed(seed: u64) -> FeatureBank {
    FeatureBank::seeded(derive_seed(seed, FEATURE_STREAM))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops early after this many steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            batch_size: 15,
            epochs: 20,
            max_steps: None,
        }
    }
}

/// Loss components recorded by one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub total: f64,
    pub l1: f64,
    pub mse: f64,
    pub feature: f64,
    pub gan_g: f64,
    pub gan_d: f64,
}

impl LossRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.total, self.l1, self.mse, self.feature, self.gan_g, self.gan_d
        )
    }
}

pub fn loss_log_csv(records: &[LossRecord]) -> String {
    let mut out = String::from(LOSS_LOG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

#[derive(Debug, Clone)]
pub struct ModelState {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub gen_moments: Moments,
    pub disc_moments: Moments,
    /// Completed training steps; also the Adam step counter.
    pub step: u64,
    pub seed: u64,
}

impl ModelState {
    pub fn new(gen_config: GeneratorConfig, disc_config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        let generator = Generator::new(gen_config, derive_seed(seed, GEN_STREAM))?;
        let discriminator = Discriminator::new(disc_config, derive_seed(seed, DISC_STREAM))?;
        Ok(Self {
            gen_moments: Moments::for_store(generator.params()),
            disc_moments: Moments::for_store(discriminator.params()),
            generator,
            discriminator,
            step: 0,
            seed,
        })
    }

    pub fn feature_bank(&self) -> FeatureBank {
        feature_bank_for_seed(self.seed)
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let c = self.generator.config();
        let cfg = [
            ("t_split", c.t_split as f64),
            ("p", c.p),
            ("low_width", c.low_width as f64),
            ("growth", c.growth as f64),
            ("rows", c.rows as f64),
            ("columns", c.columns as f64),
            ("dense_layers", c.dense_layers as f64),
            ("high_width", c.high_width as f64),
            ("high_depth", c.high_depth as f64),
            ("disc_width", self.discriminator.config().width as f64),
        ];
        let mut entries: Vec<(String, Tensor4)> = cfg
            .iter()
            .map(|(k, v)| (format!("cfg/{k}"), Tensor4::scalar(*v)))
            .collect();
        push_store(&mut entries, "gen", self.generator.params(), &self.gen_moments);
        push_store(&mut entries, "disc", self.discriminator.params(), &self.disc_moments);
        TensorFile {
            entries,
            step: self.step,
            seed: self.seed,
        }
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let int = |k: &str| -> Result<usize> {
            let v = file.scalar(&format!("cfg/{k}"))?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Checkpoint(format!("cfg/{k} = {v} is not a count")));
            }
            Ok(v as usize)
        };
        let gen_config = GeneratorConfig {
            t_split: int("t_split")?,
            p: file.scalar("cfg/p")?,
            low_width: int("low_width")?,
            growth: int("growth")?,
            rows: int("rows")?,
            columns: int("columns")?,
            dense_layers: int("dense_layers")?,
            high_width: int("high_width")?,
            high_depth: int("high_depth")?,
            identity_init: true,
        };
        let disc_config = DiscriminatorConfig {
            width: int("disc_width")?,
        };
        let mut state = Self::new(gen_config, disc_config, file.seed)?;
        load_store(file, "gen", state.generator.params_mut(), &mut state.gen_moments)?;
        load_store(file, "disc", state.discriminator.params_mut(), &mut state.disc_moments)?;
        state.step = file.step;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}

fn push_store(entries: &mut Vec<(String, Tensor4)>, prefix: &str, store: &ParamStore, moments: &Moments) {
    for (i, p) in store.params().iter().enumerate() {
        entries.push((format!("{prefix}/{}", p.name), p.value.clone()));
        if let (Some(m), Some(v)) = (&moments.m[i], &moments.v[i]) {
            entries.push((format!("{prefix}/{}.adam_m", p.name), m.clone()));
            entries.push((format!("{prefix}/{}.adam_v", p.name), v.clone()));
        }
    }
}

fn load_store(file: &TensorFile, prefix: &str, store: &mut ParamStore, moments: &mut Moments) -> Result<()> {
    let shape_err = |name: &str, e: Error| Error::Checkpoint(format!("{name}: {e}"));
    for i in 0..store.len() {
        let name = format!("{prefix}/{}", store.params()[i].name);
        let value = file.require(&name)?.clone();
        store.assign(ParamId(i), value).map_err(|e| shape_err(&name, e))?;
        if store.params()[i].role == ParamRole::Trainable {
            for (suffix, slot) in [(".adam_m", &mut moments.m[i]), (".adam_v", &mut moments.v[i])] {
                let key = format!("{name}{suffix}");
                let t = file.require(&key)?.clone();
                if Some(t.shape()) != slot.as_ref().map(|s| s.shape()) {
                    return Err(Error::Checkpoint(format!("{key}: shape mismatch")));
                }
                *slot = Some(t);
            }
        }
    }
    Ok(())
}

fn scalar(g: &Graph, v: Var) -> f64 {
    g.value(v).data()[0]
}

fn finite(name: &str, value: f64, step: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{name} = {value} at step {step}")))
    }
}

/// One discriminator update with the generator frozen, then one generator
/// update with the discriminator frozen.
pub fn train_step(
    state: &mut ModelState,
    bank: &FeatureBank,
    hazy: &Tensor4,
    clear: &Tensor4,
    cfg: &TrainConfig,
) -> Result<LossRecord> {
    if hazy.shape() != clear.shape() {
        return Err(Error::ShapeMismatch(format!(
            "hazy batch {:?} vs clear batch {:?}",
            hazy.shape(),
            clear.shape()
        )));
    }
    let t = state.step + 1;

    // The generator pass is recorded once and reused by both updates; its
    // parameters do not change during the discriminator update.
    let mut g = Graph::new();
    let gp = state.generator.params().bind(&mut g, true);
    let x = g.leaf(hazy.clone(), false);
    let y = g.leaf(clear.clone(), false);
    let out = state.generator.forward(&mut g, &gp, x, NormMode::Train)?;
    let fake = g.value(out.output).clone();
    fake.check_finite(&format!("generator output at step {t}"))?;

    let mut dg = Graph::new();
    let dp = state.discriminator.params().bind(&mut dg, true);
    let real_in = dg.leaf(clear.clone(), false);
    let fake_in = dg.leaf(fake, false);
    let s_real = state.discriminator.forward(&mut dg, &dp, real_in)?;
    let s_fake = state.discriminator.forward(&mut dg, &dp, fake_in)?;
    let l_real = dg.neg_log(s_real, false);
    let l_fake = dg.neg_log(s_fake, true);
    let loss_d = dg.add(l_real, l_fake)?;
    let gan_d = finite("loss_d", scalar(&dg, loss_d), t)?;
    let mut dgrads = dg.backward(loss_d)?;
    let dgrads = dp.gradients(&mut dgrads);
    adam_step(
        state.discriminator.params_mut(),
        &mut state.disc_moments,
        &dgrads,
        t,
        &cfg.adam,
    )?;

    let frozen_d = state.discriminator.params().bind(&mut g, false);
    let score = state.discriminator.forward(&mut g, &frozen_d, out.output)?;
    let l_gan = g.neg_log(score, false);
    let l_l1 = g.smooth_l1(out.output, y)?;
    let l_mse = g.mse(out.output, y)?;
    let fb = bank.bind(&mut g);
    let l_feat = bank.loss(&mut g, &fb, out.output, y)?;
    let w = cfg.weights;
    let terms = [
        g.scale(l_feat, w.feature),
        g.scale(l_l1, w.l1),
        g.scale(l_mse, w.mse),
        g.scale(l_gan, w.gan),
    ];
    let mut total = terms[0];
    for &term in &terms[1..] {
        total = g.add(total, term)?;
    }
    let record = LossRecord {
        step: t,
        total: finite("loss_total", scalar(&g, total), t)?,
        l1: finite("loss_l1", scalar(&g, l_l1), t)?,
        mse: finite("loss_mse", scalar(&g, l_mse), t)?,
        feature: finite("loss_feat", scalar(&g, l_feat), t)?,
        gan_g: finite("loss_g", scalar(&g, l_gan), t)?,
        gan_d,
    };
    let mut ggrads = g.backward(total)?;
    let ggrads = gp.gradients(&mut ggrads);
    adam_step(
        state.generator.params_mut(),
        &mut state.gen_moments,
        &ggrads,
        t,
        &cfg.adam,
    )?;
    state.generator.apply_bn_updates(&out.bn_updates);
    state.step = t;
    Ok(record)
}

/// Aligned hazy/clear luma patches of one size.
#[derive(Debug, Clone, Default)]
pub struct PatchSet {
    pub hazy: Vec<Plane>,
    pub clear: Vec<Plane>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.hazy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hazy.is_empty()
    }

    pub fn push(&mut self, hazy: Plane, clear: Plane) {
        self.hazy.push(hazy);
        self.clear.push(clear);
    }

    /// Stacks the patches at `indices` into hazy and clear batches.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor4, Tensor4)> {
        let h: Vec<&Plane> = indices.iter().map(|&i| &self.hazy[i]).collect();
        let c: Vec<&Plane> = indices.iter().map(|&i| &self.clear[i]).collect();
        Ok((Tensor4::from_planes(&h)?, Tensor4::from_planes(&c)?))
    }
}

/// Runs `cfg.epochs` passes over `data`, reshuffling each epoch from the
/// run seed. The last batch of an epoch may be smaller.
pub fn train(
    state: &mut ModelState,
    bank: &FeatureBank,
    data: &PatchSet,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<Vec<LossRecord>> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("no training patches".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let mut records = Vec::new();
    for epoch in 0..cfg.epochs {
        let order = crate::dataio::shuffled_indices(
            data.len(),
            derive_seed(state.seed, SHUFFLE_STREAM).wrapping_add(epoch as u64),
        );
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| records.len() >= m) {
                return Ok(records);
            }
            let (h, c) = data.batch(chunk)?;
            let rec = train_step(state, bank, &h, &c, cfg)?;
            on_step(&rec);
            records.push(rec);
        }
    }
    Ok(records)
}
