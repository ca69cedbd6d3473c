//! Linear, layer-norm and feed-forward building blocks.

use crate::autograd::{Mode, Tape, VarId};
use crate::error::Result;
use crate::params::{xavier_uniform, ParamId, ParamStore};
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map x -> xW + b.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut RngState,
        name: &str,
        d_in: usize,
        d_out: usize,
        trainable: bool,
    ) -> Linear {
        let w = store.add(format!("{name}/w"), xavier_uniform(d_in, d_out, rng), trainable);
        let b = store.add(format!("{name}/b"), Tensor::zeros(&[d_out]), trainable);
        Linear { w, b, d_in, d_out }
    }

    /// Identity-initialized square adapter (falls back to Xavier when the
    /// widths differ).
    pub fn new_identity(
        store: &mut ParamStore,
        rng: &mut RngState,
        name: &str,
        d_in: usize,
        d_out: usize,
        trainable: bool,
    ) -> Linear {
        let init = if d_in == d_out {
            Tensor::identity(d_in)
        } else {
            xavier_uniform(d_in, d_out, rng)
        };
        let w = store.add(format!("{name}/w"), init, trainable);
        let b = store.add(format!("{name}/b"), Tensor::zeros(&[d_out]), trainable);
        Linear { w, b, d_in, d_out }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        // Rank-1 inputs pass through as a single row.
        let rank1 = tape.value(x).rank() == 1;
        let x2 = if rank1 {
            let d = tape.value(x).cols();
            tape.reshape(x, &[1, d])?
        } else {
            x
        };
        let y = tape.matmul(x2, w)?;
        let y = tape.add_bias(y, b)?;
        if rank1 {
            tape.reshape(y, &[self.d_out])
        } else {
            Ok(y)
        }
    }
}

/// Per-row layer normalization parameters (gamma, beta).
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub d: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, trainable: bool) -> LayerNorm {
        let gamma = store.add(format!("{name}/gamma"), Tensor::full(&[d], 1.0), trainable);
        let beta = store.add(format!("{name}/beta"), Tensor::zeros(&[d]), trainable);
        LayerNorm { gamma, beta, d }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        let gamma = tape.param(store, self.gamma);
        let beta = tape.param(store, self.beta);
        tape.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
    }
}

/// Two-layer feed-forward block: linear(d -> d_ff), ReLU, linear(d_ff -> d).
/// The inner width is fixed at 2x the model width.
#[derive(Debug, Clone)]
pub struct Ffn {
    pub lin1: Linear,
    pub lin2: Linear,
}

pub fn ffn_inner_width(d_model: usize) -> usize {
    2 * d_model
}

impl Ffn {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut RngState,
        name: &str,
        d_model: usize,
        trainable: bool,
    ) -> Ffn {
        let d_ff = ffn_inner_width(d_model);
        Ffn {
            lin1: Linear::new(store, rng, &format!("{name}/lin1"), d_model, d_ff, trainable),
            lin2: Linear::new(store, rng, &format!("{name}/lin2"), d_ff, d_model, trainable),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        let h = self.lin1.forward(tape, store, x)?;
        let h = tape.relu(h);
        self.lin2.forward(tape, store, h)
    }
}

/// Residual-path dropout shared by both encoder sublayers.
pub fn residual_dropout(
    tape: &mut Tape,
    x: VarId,
    p: f64,
    mode: Mode,
    rng: &mut RngState,
) -> Result<VarId> {
    tape.dropout(x, p, mode, rng)
}
