use crate::error::{Error, Result};

use super::graph::{mse_value, neg_log_value, smooth_l1_value};
use super::tensor::Tensor4;

/// Weights of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub feature: f64,
    pub l1: f64,
    pub mse: f64,
    pub gan: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            feature: 0.5,
            l1: 1.0,
            mse: 0.04,
            gan: 0.05,
        }
    }
}

/// Unweighted generator loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub feature: f64,
    pub l1: f64,
    pub mse: f64,
    pub gan: f64,
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    w.feature * parts.feature + w.l1 * parts.l1 + w.mse * parts.mse + w.gan * parts.gan
}

fn check_shapes(a: &Tensor4, b: &Tensor4) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn smooth_l1_loss(pred: &Tensor4, target: &Tensor4) -> Result<f64> {
    check_shapes(pred, target)?;
    Ok(smooth_l1_value(pred.data(), target.data()))
}

pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<f64> {
    check_shapes(pred, target)?;
    Ok(mse_value(pred.data(), target.data()))
}

/// `(loss_d, loss_g)` for single real and fake scores.
pub fn gan_losses(d_real: f64, d_fake: f64) -> (f64, f64) {
    let loss_d = neg_log_value(d_real, false) + neg_log_value(d_fake, true);
    (loss_d, neg_log_value(d_fake, false))
}
