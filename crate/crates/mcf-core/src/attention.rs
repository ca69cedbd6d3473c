//! Scaled dot-product and multi-head attention.

use crate::autograd::{Tape, VarId};
use crate::error::{McfError, Result};
use crate::layers::Linear;
use crate::params::ParamStore;
use crate::rng::RngState;

/// Multi-head attention parameters: four projections with biases.
#[derive(Debug, Clone)]
pub struct MhaParams {
    pub heads: usize,
    pub d_model: usize,
    pub proj_q: Linear,
    pub proj_k: Linear,
    pub proj_v: Linear,
    pub proj_o: Linear,
}

impl MhaParams {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut RngState,
        name: &str,
        heads: usize,
        d_model: usize,
        trainable: bool,
    ) -> Result<MhaParams> {
        if heads == 0 || d_model % heads != 0 {
            return Err(McfError::Config(format!(
                "d_model {d_model} not divisible by heads {heads}"
            )));
        }
        Ok(MhaParams {
            heads,
            d_model,
            proj_q: Linear::new(store, rng, &format!("{name}/w_q"), d_model, d_model, trainable),
            proj_k: Linear::new(store, rng, &format!("{name}/w_k"), d_model, d_model, trainable),
            proj_v: Linear::new(store, rng, &format!("{name}/w_v"), d_model, d_model, trainable),
            proj_o: Linear::new(store, rng, &format!("{name}/w_o"), d_model, d_model, trainable),
        })
    }

    pub fn head_width(&self) -> usize {
        self.d_model / self.heads
    }

    /// Project, attend per head, concatenate, and apply the output map.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q: VarId,
        k: VarId,
        v: VarId,
        mask: Option<&[bool]>,
    ) -> Result<VarId> {
        for (name, id) in [("query", q), ("key", k), ("value", v)] {
            let w = tape.value(id).cols();
            if w != self.d_model {
                return Err(McfError::Dim(format!(
                    "{name} width {w} does not match d_model {}",
                    self.d_model
                )));
            }
        }
        let qp = self.proj_q.forward(tape, store, q)?;
        let kp = self.proj_k.forward(tape, store, k)?;
        let vp = self.proj_v.forward(tape, store, v)?;
        let dh = self.head_width();
        let mut head_outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(qp, h * dh, dh)?;
            let kh = tape.slice_cols(kp, h * dh, dh)?;
            let vh = tape.slice_cols(vp, h * dh, dh)?;
            let (ctx, _) = scaled_dot_attention(tape, qh, kh, vh, mask)?;
            head_outputs.push(ctx);
        }
        let merged = tape.concat_cols(&head_outputs)?;
        self.proj_o.forward(tape, store, merged)
    }
}

/// Attention over one head: weights = softmax(QK^T / sqrt(d_h)) with an
/// optional key mask; context = weights . V. The weights node is returned
/// for instrumentation.
pub fn scaled_dot_attention(
    tape: &mut Tape,
    q: VarId,
    k: VarId,
    v: VarId,
    mask: Option<&[bool]>,
) -> Result<(VarId, VarId)> {
    let dq = tape.value(q).cols();
    let dk = tape.value(k).cols();
    if dq != dk {
        return Err(McfError::Dim(format!("query width {dq} vs key width {dk}")));
    }
    let tk = tape.value(k).rows();
    if tape.value(v).rows() != tk {
        return Err(McfError::Dim(format!(
            "key rows {tk} vs value rows {}",
            tape.value(v).rows()
        )));
    }
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (dq as f64).sqrt());
    let weights = tape.softmax_rows(scores, mask)?;
    let ctx = tape.matmul(weights, v)?;
    Ok((ctx, weights))
}
