//! Desk-scale experiments on procedurally hazed scenes: toy training runs
//! and the threshold sweep.

use std::fmt::Write as _;

use crate::colorspace::rgb_to_ycbcr;
use crate::error::{Error, Result};
use crate::metrics::{psnr_plane, ssim};
use crate::neural::discriminator::DiscriminatorConfig;
use crate::neural::generator::GeneratorConfig;
use crate::neural::train::{train, LossRecord, ModelState, PatchSet, TrainConfig};
use crate::neural::Tensor4;
use crate::plane::Plane;
use crate::scenes::hazy_pair;

/// Seeds of held-out scenes start here so they never overlap training
/// scenes.
pub const HELD_OUT_BASE: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub pairs: usize,
    pub held_out: usize,
    pub side: usize,
    pub scale: f64,
    pub threshold: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub airlight: f64,
    pub t_range: (f64, f64),
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            pairs: 50,
            held_out: 10,
            side: 64,
            scale: 0.25,
            threshold: crate::neural::generator::DEFAULT_THRESHOLD,
            steps: 200,
            batch_size: 5,
            airlight: 0.8,
            t_range: (0.3, 0.7),
            seed: 7,
        }
    }
}

/// Luma patches of `count` hazed scenes with seeds `first..first+count`.
pub fn synthetic_patches(count: usize, side: usize, first: u64, airlight: f64, t_range: (f64, f64)) -> Result<PatchSet> {
    let mut set = PatchSet::default();
    for i in 0..count as u64 {
        let pair = hazy_pair(side, side, first + i, airlight, t_range.0, t_range.1);
        set.push(rgb_to_ycbcr(&pair.hazy)?.y, rgb_to_ycbcr(&pair.clear)?.y);
    }
    Ok(set)
}

/// Mean luma PSNR and SSIM of `pred` against `gt`.
pub fn mean_quality(pred: &[Plane], gt: &[Plane]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} references", pred.len(), gt.len())));
    }
    let mut p = 0.0;
    let mut s = 0.0;
    for (a, b) in pred.iter().zip(gt) {
        p += psnr_plane(a, b, 1.0)?;
        s += ssim(a, b)?;
    }
    let n = pred.len() as f64;
    Ok((p / n, s / n))
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub losses: Vec<LossRecord>,
    pub state: ModelState,
    pub hazy_psnr: f64,
    pub hazy_ssim: f64,
    pub dehazed_psnr: f64,
    pub dehazed_ssim: f64,
}

impl ToyOutcome {
    /// Smooth-L1 of the last step over that of the first.
    pub fn l1_ratio(&self) -> f64 {
        match (self.losses.first(), self.losses.last()) {
            (Some(a), Some(b)) if a.l1 > 0.0 => b.l1 / a.l1,
            _ => f64::NAN,
        }
    }
}

/// Trains for exactly `cfg.steps` steps and scores the held-out scenes.
pub fn toy_training(cfg: &ToyConfig) -> Result<ToyOutcome> {
    if cfg.pairs == 0 || cfg.held_out == 0 || cfg.steps == 0 {
        return Err(Error::InvalidParameter("toy run needs pairs, held-out scenes and steps".into()));
    }
    let data = synthetic_patches(cfg.pairs, cfg.side, cfg.seed.wrapping_mul(1 << 20), cfg.airlight, cfg.t_range)?;
    let mut gcfg = GeneratorConfig::scaled(cfg.scale);
    gcfg.t_split = cfg.threshold;
    let mut state = ModelState::new(gcfg, DiscriminatorConfig::scaled(cfg.scale), cfg.seed)?;
    let bank = state.feature_bank();

    let tcfg = TrainConfig {
        batch_size: cfg.batch_size,
        epochs: cfg.steps.div_ceil(cfg.pairs.div_ceil(cfg.batch_size)),
        max_steps: Some(cfg.steps),
        ..TrainConfig::default()
    };
    let losses = train(&mut state, &bank, &data, &tcfg, |_| {})?;

    let held = synthetic_patches(cfg.held_out, cfg.side, HELD_OUT_BASE + cfg.seed.wrapping_mul(1 << 20), cfg.airlight, cfg.t_range)?;
    let refs: Vec<&Plane> = held.hazy.iter().collect();
    let out = state.generator.infer(&Tensor4::from_planes(&refs)?)?;
    let dehazed: Vec<Plane> = (0..held.len()).map(|n| out.plane(n, 0)).collect();
    let (hazy_psnr, hazy_ssim) = mean_quality(&held.hazy, &held.clear)?;
    let (dehazed_psnr, dehazed_ssim) = mean_quality(&dehazed, &held.clear)?;
    Ok(ToyOutcome {
        losses,
        state,
        hazy_psnr,
        hazy_ssim,
        dehazed_psnr,
        dehazed_ssim,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub hazy_psnr: f64,
    pub hazy_ssim: f64,
    pub final_l1: f64,
}

pub const SWEEP_HEADER: &str = "threshold,psnr_db,ssim,hazy_psnr_db,hazy_ssim,final_l1";

/// Thresholds evaluated by default, bracketing the standard split.
pub const SWEEP_THRESHOLDS: [usize; 4] = [40, 50, 60, 63];

/// One toy run per threshold, all else fixed.
pub fn threshold_sweep(base: &ToyConfig, thresholds: &[usize]) -> Result<Vec<SweepRow>> {
    thresholds
        .iter()
        .map(|&t| {
            let run = toy_training(&ToyConfig { threshold: t, ..base.clone() })?;
            Ok(SweepRow {
                threshold: t,
                psnr: run.dehazed_psnr,
                ssim: run.dehazed_ssim,
                hazy_psnr: run.hazy_psnr,
                hazy_ssim: run.hazy_ssim,
                final_l1: run.losses.last().map_or(f64::NAN, |r| r.l1),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.threshold, r.psnr, r.ssim, r.hazy_psnr, r.hazy_ssim, r.final_l1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ToyConfig {
        ToyConfig {
            pairs: 3,
            held_out: 2,
            side: 16,
            scale: 0.125,
            steps: 3,
            batch_size: 2,
            ..ToyConfig::default()
        }
    }

    #[test]
    fn runs_exact_step_count() {
        let run = toy_training(&tiny()).unwrap();
        assert_eq!(run.losses.len(), 3);
        assert_eq!(run.state.step, 3);
        assert!(run.l1_ratio().is_finite());
        assert!(run.hazy_psnr.is_finite() && run.dehazed_psnr.is_finite());
    }

    #[test]
    fn toy_runs_repeat_exactly() {
        let a = toy_training(&tiny()).unwrap();
        let b = toy_training(&tiny()).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.state.to_tensor_file().to_bytes(), b.state.to_tensor_file().to_bytes());
    }

    #[test]
    fn held_out_scenes_differ_from_training() {
        let cfg = tiny();
        let train = synthetic_patches(cfg.pairs, cfg.side, cfg.seed.wrapping_mul(1 << 20), 0.8, (0.3, 0.7)).unwrap();
        let held = synthetic_patches(cfg.held_out, cfg.side, HELD_OUT_BASE + cfg.seed.wrapping_mul(1 << 20), 0.8, (0.3, 0.7)).unwrap();
        assert!(held.clear.iter().all(|h| train.clear.iter().all(|t| t != h)));
    }

    #[test]
    fn sweep_csv_layout() {
        let rows = threshold_sweep(&ToyConfig { steps: 1, ..tiny() }, &[40, 63]).unwrap();
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("40,") && lines[2].starts_with("63,"));
    }

    #[test]
    fn quality_rejects_mismatched_lists() {
        assert!(mean_quality(&[], &[]).is_err());
    }
}
