//! Cross-modal encoder layers and their stacking rule.
//!
//! Two layer designs exist: a post-norm cross-attention layer, and a
//! self-attention-augmented variant that first transforms the query with
//! self-attention before handing it to the cross-attention layer. A block
//! chains L layers, feeding each layer's output back as the next query
//! while the key/value context stays fixed.

use crate::attention::MhaParams;
use crate::autograd::{Mode, Tape, VarId};
use crate::error::{McfError, Result};
use crate::layers::{residual_dropout, Ffn, LayerNorm};
use crate::params::ParamStore;
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Encoder layer design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderVariant {
    MhaEnc,
    SagMhaEnc,
}

impl EncoderVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderVariant::MhaEnc => "mha_enc",
            EncoderVariant::SagMhaEnc => "sag_mha_enc",
        }
    }

    pub fn parse(s: &str) -> Result<EncoderVariant> {
        match s {
            "mha_enc" => Ok(EncoderVariant::MhaEnc),
            "sag_mha_enc" => Ok(EncoderVariant::SagMhaEnc),
            other => Err(McfError::Config(format!("unknown encoder variant '{other}'"))),
        }
    }
}

/// Post-norm cross-attention encoder layer with two unshared layer norms.
#[derive(Debug, Clone)]
pub struct MhaEncLayer {
    pub mha: MhaParams,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    pub ffn: Ffn,
    pub dropout_p: f64,
}

impl MhaEncLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut RngState,
        name: &str,
        heads: usize,
        d_model: usize,
        dropout_p: f64,
        trainable: bool,
    ) -> Result<MhaEncLayer> {
        Ok(MhaEncLayer {
            mha: MhaParams::new(store, rng, &format!("{name}/mha"), heads, d_model, trainable)?,
            ln1: LayerNorm::new(store, &format!("{name}/ln1"), d_model, trainable),
            ln2: LayerNorm::new(store, &format!("{name}/ln2"), d_model, trainable),
            ffn: Ffn::new(store, rng, &format!("{name}/ffn"), d_model, trainable),
            dropout_p,
        })
    }

    /// Q' = LN1(Q + Dropout(MHA(Q,K,V))); Q* = LN2(Dropout(FFN(Q')) + Q').
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q: VarId,
        k: VarId,
        v: VarId,
        mask: Option<&[bool]>,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<VarId> {
        let attn = self.mha.forward(tape, store, q, k, v, mask)?;
        let attn = residual_dropout(tape, attn, self.dropout_p, mode, rng)?;
        let res1 = tape.add(q, attn)?;
        let q_prime = self.ln1.forward(tape, store, res1)?;
        let ff = self.ffn.forward(tape, store, q_prime)?;
        let ff = residual_dropout(tape, ff, self.dropout_p, mode, rng)?;
        let res2 = tape.add(ff, q_prime)?;
        self.ln2.forward(tape, store, res2)
    }
}

/// Self-attention-augmented layer: the query is first transformed by a
/// residual self-attention sublayer, then passed to an inner cross layer.
#[derive(Debug, Clone)]
pub struct SagMhaEncLayer {
    pub self_mha: MhaParams,
    pub ln_self: LayerNorm,
    pub inner: MhaEncLayer,
    pub dropout_p: f64,
}

impl SagMhaEncLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut RngState,
        name: &str,
        heads: usize,
        d_model: usize,
        dropout_p: f64,
        trainable: bool,
    ) -> Result<SagMhaEncLayer> {
        Ok(SagMhaEncLayer {
            self_mha: MhaParams::new(
                store,
                rng,
                &format!("{name}/self_mha"),
                heads,
                d_model,
                trainable,
            )?,
            ln_self: LayerNorm::new(store, &format!("{name}/ln_self"), d_model, trainable),
            inner: MhaEncLayer::new(
                store,
                rng,
                &format!("{name}/inner"),
                heads,
                d_model,
                dropout_p,
                trainable,
            )?,
            dropout_p,
        })
    }

    /// Q' = LN_self(Q + Dropout(MHA(Q,Q,Q))); Q* = inner(Q', K, V).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q: VarId,
        k: VarId,
        v: VarId,
        mask: Option<&[bool]>,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<VarId> {
        let self_attn = self.self_mha.forward(tape, store, q, q, q, None)?;
        let self_attn = residual_dropout(tape, self_attn, self.dropout_p, mode, rng)?;
        let res = tape.add(q, self_attn)?;
        let q_prime = self.ln_self.forward(tape, store, res)?;
        self.inner.forward(tape, store, q_prime, k, v, mask, mode, rng)
    }
}

#[derive(Debug, Clone)]
pub enum EncLayer {
    Mha(MhaEncLayer),
    Sag(SagMhaEncLayer),
}

impl EncLayer {
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q: VarId,
        k: VarId,
        v: VarId,
        mask: Option<&[bool]>,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<VarId> {
        match self {
            EncLayer::Mha(l) => l.forward(tape, store, q, k, v, mask, mode, rng),
            EncLayer::Sag(l) => l.forward(tape, store, q, k, v, mask, mode, rng),
        }
    }
}

/// A stack of L encoder layers sharing one key/value input.
#[derive(Debug, Clone)]
pub struct CmEncBlock {
    pub variant: EncoderVariant,
    pub layers: Vec<EncLayer>,
    pub d_model: usize,
    pub heads: usize,
}

impl CmEncBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut RngState,
        name: &str,
        variant: EncoderVariant,
        n_layers: usize,
        heads: usize,
        d_model: usize,
        dropout_p: f64,
        trainable: bool,
    ) -> Result<CmEncBlock> {
        if n_layers == 0 {
            return Err(McfError::Config("encoder block needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let lname = format!("{name}/layer{i}");
            let layer = match variant {
                EncoderVariant::MhaEnc => EncLayer::Mha(MhaEncLayer::new(
                    store, rng, &lname, heads, d_model, dropout_p, trainable,
                )?),
                EncoderVariant::SagMhaEnc => EncLayer::Sag(SagMhaEncLayer::new(
                    store, rng, &lname, heads, d_model, dropout_p, trainable,
                )?),
            };
            layers.push(layer);
        }
        Ok(CmEncBlock { variant, layers, d_model, heads })
    }

    /// Sequential stack: each layer's output becomes the next query; the
    /// same K and V feed every layer.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q: VarId,
        k: VarId,
        v: VarId,
        mask: Option<&[bool]>,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<VarId> {
        self.forward_traced(tape, store, q, k, v, mask, mode, rng, None)
    }

    /// Like [`forward`], optionally recording the (K, V) tensor contents
    /// each layer actually receives.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_traced(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        q: VarId,
        k: VarId,
        v: VarId,
        mask: Option<&[bool]>,
        mode: Mode,
        rng: &mut RngState,
        mut trace: Option<&mut Vec<(Tensor, Tensor)>>,
    ) -> Result<VarId> {
        let mut cur = q;
        for layer in &self.layers {
            if let Some(t) = trace.as_deref_mut() {
                t.push((tape.value(k).clone(), tape.value(v).clone()));
            }
            cur = layer.forward(tape, store, cur, k, v, mask, mode, rng)?;
        }
        Ok(cur)
    }
}
