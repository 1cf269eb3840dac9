use crate::error::{Error, Result};

use super::params::{ParamRole, ParamStore};
use super::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments, present exactly for trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<Option<Tensor4>>,
    pub v: Vec<Option<Tensor4>>,
}

impl Moments {
    pub fn for_store(store: &ParamStore) -> Self {
        let zeros: Vec<Option<Tensor4>> = store
            .params()
            .iter()
            .map(|p| (p.role == ParamRole::Trainable).then(|| Tensor4::zeros(p.value.shape())))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Missing gradients
/// count as zero; frozen tensors and buffers are never touched.
pub fn adam_step(
    store: &mut ParamStore,
    moments: &mut Moments,
    grads: &[Option<Tensor4>],
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != store.len() || moments.m.len() != store.len() {
        return Err(Error::ShapeMismatch("gradient list does not match parameters".into()));
    }
    if t == 0 {
        return Err(Error::InvalidParameter("Adam step counter starts at 1".into()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (i, grad) in grads.iter().enumerate() {
        let (Some(m), Some(v)) = (moments.m[i].as_mut(), moments.v[i].as_mut()) else {
            continue;
        };
        let lr = cfg.lr * store.params()[i].lr_scale;
        let param = store.value_mut(super::params::ParamId(i));
        let zero;
        let g = match grad {
            Some(g) => g,
            None => {
                zero = Tensor4::zeros(param.shape());
                &zero
            }
        };
        g.check_finite("parameter gradient")?;
        for (((p, m), v), &g) in param
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}
