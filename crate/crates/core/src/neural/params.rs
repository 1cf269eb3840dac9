use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::graph::{Gradients, Graph, Var};
use super::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Updated by the optimizer.
    Trainable,
    /// Used in the forward pass but never updated.
    Frozen,
    /// Non-differentiable state such as running statistics.
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor4,
    pub role: ParamRole,
    /// Multiplies the optimizer step size for this tensor.
    pub lr_scale: f64,
}

/// Ordered, named tensors belonging to one network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Index of a tensor in its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor4, role: ParamRole) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            role,
            lr_scale: 1.0,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn set_lr_scale(&mut self, id: ParamId, scale: f64) {
        self.params[id.0].lr_scale = scale;
    }

    /// Adds a tensor drawn from `U(-a, a)` with `a = sqrt(3 / fan_in)`,
    /// fan-in being the product of all but the first dimension.
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: [usize; 4], rng: &mut ChaCha8Rng) -> ParamId {
        let fan_in: usize = shape[1..].iter().product();
        let a = (3.0 / fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-a..a)).collect();
        self.add(name, Tensor4::from_vec(shape, data).expect("shape"), ParamRole::Trainable)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor4 {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor4 {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.role == ParamRole::Trainable).count()
    }

    /// Total number of scalar entries in trainable tensors.
    pub fn trainable_size(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.role == ParamRole::Trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Puts every tensor on the tape. Trainable tensors require gradients
    /// only when `with_grad` is set.
    pub fn bind(&self, graph: &mut Graph, with_grad: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| graph.leaf(p.value.clone(), with_grad && p.role == ParamRole::Trainable))
            .collect();
        Bound { vars }
    }

    /// Replaces a tensor, keeping its shape.
    pub fn assign(&mut self, id: ParamId, value: Tensor4) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{}: {:?} vs {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }
}

/// Tape handles for every tensor of a store, in store order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Collects parameter gradients in store order.
    pub fn gradients(&self, grads: &mut Gradients) -> Vec<Option<Tensor4>> {
        self.vars.iter().map(|&v| grads.take(v)).collect()
    }
}
