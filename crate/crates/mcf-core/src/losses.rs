//! Training objectives.
//!
//! Joint discrete+continuous loss (weighted BCE + MSE) for the multilabel
//! task, and multi-class cross entropy for the single-label task. Tape
//! variants build the loss on an autograd tape; plain variants compute the
//! value directly and are used for evaluation and as cross-checks.

use crate::autograd::{sigmoid, Tape, VarId};
use crate::error::{McfError, Result};
use crate::tensor::Tensor;

pub const PROB_CLAMP: f64 = 1e-7;

fn check_binary(y_disc: &[f64]) -> Result<()> {
    if y_disc.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(McfError::Param("discrete labels must be 0 or 1".into()));
    }
    Ok(())
}

/// lambda1 * BCE(sigmoid(disc_logits), y_disc) + lambda2 * MSE(cont, y_cont).
/// BCE averages over classes with probabilities clamped to
/// [1e-7, 1 - 1e-7]; MSE averages over the 3 continuous dims.
pub fn emotic_loss(
    disc_logits: &Tensor,
    cont: &Tensor,
    y_disc: &[f64],
    y_cont: &[f64],
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    if disc_logits.numel() != y_disc.len() {
        return Err(McfError::Dim(format!(
            "{} logits vs {} discrete labels",
            disc_logits.numel(),
            y_disc.len()
        )));
    }
    if cont.numel() != y_cont.len() {
        return Err(McfError::Dim(format!(
            "{} continuous outputs vs {} targets",
            cont.numel(),
            y_cont.len()
        )));
    }
    check_binary(y_disc)?;
    let n = y_disc.len() as f64;
    let mut bce = 0.0;
    for (&z, &t) in disc_logits.data().iter().zip(y_disc) {
        let p = sigmoid(z).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        bce += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    }
    bce /= n;
    let mse = cont
        .data()
        .iter()
        .zip(y_cont)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y_cont.len() as f64;
    Ok(lambda1 * bce + lambda2 * mse)
}

/// Tape version of [`emotic_loss`]; returns a scalar node.
pub fn emotic_loss_on_tape(
    tape: &mut Tape,
    disc_logits: VarId,
    cont: VarId,
    y_disc: &[f64],
    y_cont: &[f64],
    lambda1: f64,
    lambda2: f64,
) -> Result<VarId> {
    let bce = tape.bce_with_logits(disc_logits, y_disc)?;
    let mse = tape.mse_mean(cont, y_cont)?;
    tape.add_scaled(bce, mse, lambda1, lambda2)
}

/// Multi-class cross entropy, -log softmax(logits)[y], stabilized by max
/// subtraction.
pub fn caer_loss(disc_logits: &Tensor, y: usize) -> Result<f64> {
    let n = disc_logits.numel();
    if y >= n {
        return Err(McfError::Param(format!("class index {y} out of range 0..{n}")));
    }
    let mx = disc_logits
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = disc_logits
        .data()
        .iter()
        .map(|&z| (z - mx).exp())
        .sum::<f64>()
        .ln();
    Ok(-(disc_logits.data()[y] - mx - log_sum))
}

/// Tape version of [`caer_loss`].
pub fn caer_loss_on_tape(tape: &mut Tape, disc_logits: VarId, y: usize) -> Result<VarId> {
    tape.cross_entropy_logits(disc_logits, y)
}
