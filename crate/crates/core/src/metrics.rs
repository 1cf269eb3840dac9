//! Full-reference quality metrics: PSNR and single-scale SSIM.

use std::fmt::Write as _;

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::plane::{PlanarImage, Plane};

/// PSNR reported for identical images (and the ceiling for all others).
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_same(a: &PlanarImage, b: &PlanarImage) -> Result<()> {
    if a.dim() != b.dim() || a.num_channels() != b.num_channels() {
        return Err(Error::ShapeMismatch(format!(
            "images differ: {:?}x{} vs {:?}x{}",
            a.dim(),
            a.num_channels(),
            b.dim(),
            b.num_channels()
        )));
    }
    Ok(())
}

/// PSNR over all channels of two images, in dB.
pub fn psnr(pred: &PlanarImage, gt: &PlanarImage, peak: f64) -> Result<f64> {
    check_same(pred, gt)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, g) in pred.channels().iter().zip(gt.channels()) {
        sum += p.iter().zip(g.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += p.len();
    }
    Ok(psnr_from_mse(sum / count as f64, peak))
}

pub fn psnr_plane(pred: &Plane, gt: &Plane, peak: f64) -> Result<f64> {
    if pred.dim() != gt.dim() {
        return Err(Error::ShapeMismatch(format!(
            "planes differ: {:?} vs {:?}",
            pred.dim(),
            gt.dim()
        )));
    }
    let mse = pred
        .iter()
        .zip(gt.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(psnr_from_mse(mse, peak))
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

fn gaussian_window() -> Array2<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    Array2::from_shape_fn((SSIM_WINDOW, SSIM_WINDOW), |(r, c)| g[r] * g[c] / (total * total))
}

/// Mean SSIM over every fully contained 11x11 Gaussian window.
pub fn ssim(pred: &Plane, gt: &Plane) -> Result<f64> {
    if pred.dim() != gt.dim() {
        return Err(Error::ShapeMismatch(format!(
            "planes differ: {:?} vs {:?}",
            pred.dim(),
            gt.dim()
        )));
    }
    let (h, w) = pred.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::ShapeMismatch(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let window = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let pa = pred.slice(s![y..y + SSIM_WINDOW, x..x + SSIM_WINDOW]);
            let pb = gt.slice(s![y..y + SSIM_WINDOW, x..x + SSIM_WINDOW]);
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ((&wv, &a), &b) in window.iter().zip(pa.iter()).zip(pb.iter()) {
                ma += wv * a;
                mb += wv * b;
                saa += wv * a * a;
                sbb += wv * b * b;
                sab += wv * (a * b);
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - (ma * mb);
            total += ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// SSIM averaged over the channels of two images.
pub fn ssim_image(pred: &PlanarImage, gt: &PlanarImage) -> Result<f64> {
    check_same(pred, gt)?;
    let mut acc = 0.0;
    for (p, g) in pred.channels().iter().zip(gt.channels()) {
        acc += ssim(p, g)?;
    }
    Ok(acc / pred.num_channels() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-image metrics plus their means.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
}

impl MetricReport {
    pub fn push(&mut self, name: impl Into<String>, psnr: f64, ssim: f64) {
        self.images.push(ImageMetrics {
            name: name.into(),
            psnr,
            ssim,
        });
    }

    pub fn mean_psnr(&self) -> f64 {
        self.images.iter().map(|m| m.psnr).sum::<f64>() / self.images.len().max(1) as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.images.iter().map(|m| m.ssim).sum::<f64>() / self.images.len().max(1) as f64
    }

    /// `image,psnr_db,ssim` rows followed by a `MEAN` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,psnr_db,ssim\n");
        for m in &self.images {
            let _ = writeln!(out, "{},{},{}", m.name, m.psnr, m.ssim);
        }
        let _ = writeln!(out, "MEAN,{},{}", self.mean_psnr(), self.mean_ssim());
        out
    }
}
