//! Trainable parameter storage.

use crate::error::{McfError, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// A trainable tensor with a gradient accumulator and a freeze flag.
/// Frozen parameters keep an identically-zero gradient through any
/// backward pass.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

/// Handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Flat ordered registry of model parameters. Serialization order is
/// insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name: name.into(), value, grad, trainable });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Total scalar element count across all parameters.
    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != g.shape() {
            return Err(McfError::Dim(format!(
                "gradient shape {:?} for parameter {} of shape {:?}",
                g.shape(),
                p.name,
                p.value.shape()
            )));
        }
        if p.trainable {
            p.grad.add_assign(g);
        }
        Ok(())
    }
}

/// Xavier-uniform initialized matrix of shape [d_in, d_out].
pub fn xavier_uniform(d_in: usize, d_out: usize, rng: &mut RngState) -> Tensor {
    let bound = (6.0 / (d_in + d_out) as f64).sqrt();
    let mut t = Tensor::zeros(&[d_in, d_out]);
    for v in t.data_mut() {
        *v = rng.uniform(-bound, bound);
    }
    t
}
