//! Optimizers and the exponential learning-rate schedule.

use crate::error::{McfError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdamW,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
        }
    }

    pub fn parse(s: &str) -> Result<OptimizerKind> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::AdamW),
            other => Err(McfError::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Optimizer hyperparameters. Defaults: SGD momentum 0.9, Adam
/// beta1=0.9 / beta2=0.999 / eps=1e-8, AdamW decoupled decay 0.01.
#[derive(Debug, Clone)]
pub struct OptimizerHyper {
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerHyper {
    fn default() -> Self {
        OptimizerHyper { momentum: 0.9, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Stateful optimizer over a parameter store. State slots are keyed by
/// parameter index; the step counter is per parameter.
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub hyper: OptimizerHyper,
    slots: Vec<Slot>,
}

struct Slot {
    m: Option<Tensor>,
    v: Option<Tensor>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, hyper: OptimizerHyper) -> Optimizer {
        Optimizer { kind, hyper, slots: Vec::new() }
    }

    fn ensure_slots(&mut self, n: usize) {
        while self.slots.len() < n {
            self.slots.push(Slot { m: None, v: None, step: 0 });
        }
    }

    /// Apply one update from the accumulated gradients. Frozen parameters
    /// are skipped entirely.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        self.ensure_slots(store.len());
        let h = self.hyper.clone();
        let kind = self.kind;
        for (idx, p) in store.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let slot = &mut self.slots[idx];
            match kind {
                OptimizerKind::Sgd => {
                    let m = slot
                        .m
                        .get_or_insert_with(|| Tensor::zeros(p.value.shape()));
                    for ((mv, g), w) in m
                        .data_mut()
                        .iter_mut()
                        .zip(p.grad.data())
                        .zip(p.value.data_mut())
                    {
                        *mv = h.momentum * *mv + g;
                        *w -= lr * *mv;
                    }
                }
                OptimizerKind::Adam | OptimizerKind::AdamW => {
                    slot.step += 1;
                    let t = slot.step as i32;
                    let m = slot
                        .m
                        .get_or_insert_with(|| Tensor::zeros(p.value.shape()));
                    let v = slot
                        .v
                        .get_or_insert_with(|| Tensor::zeros(p.value.shape()));
                    let bc1 = 1.0 - h.beta1.powi(t);
                    let bc2 = 1.0 - h.beta2.powi(t);
                    for (((mv, vv), g), w) in m
                        .data_mut()
                        .iter_mut()
                        .zip(v.data_mut())
                        .zip(p.grad.data())
                        .zip(p.value.data_mut())
                    {
                        *mv = h.beta1 * *mv + (1.0 - h.beta1) * g;
                        *vv = h.beta2 * *vv + (1.0 - h.beta2) * g * g;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + h.eps);
                        if kind == OptimizerKind::AdamW {
                            *w -= lr * h.weight_decay * *w;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Exponential schedule: lr0 * gamma^epoch, applied at epoch boundaries.
pub fn exp_schedule(lr0: f64, gamma: f64, epoch: usize) -> f64 {
    lr0 * gamma.powi(epoch as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamStore {
        let mut store = ParamStore::new();
        store.add("p", Tensor::full(&[2, 2], v), true);
        store
    }

    #[test]
    fn sgd_zero_gradient_fixed_point() {
        let mut store = one_param(1.5);
        let mut opt = Optimizer::new(
            OptimizerKind::Sgd,
            OptimizerHyper { momentum: 0.0, ..Default::default() },
        );
        opt.step(&mut store, 0.1).unwrap();
        assert_eq!(store.iter().next().unwrap().value, Tensor::full(&[2, 2], 1.5));
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        let mut store = one_param(0.0);
        store.iter_mut().next().unwrap().grad.fill(3.7);
        let mut opt = Optimizer::new(OptimizerKind::Adam, OptimizerHyper::default());
        opt.step(&mut store, 0.01).unwrap();
        for &w in store.iter().next().unwrap().value.data() {
            // m_hat / sqrt(v_hat) = g/|g| up to eps.
            assert!((w + 0.01).abs() < 1e-6, "w {w}");
        }
    }

    #[test]
    fn adamw_decoupled_decay_shrinks() {
        let mut store = one_param(2.0);
        let mut opt = Optimizer::new(OptimizerKind::AdamW, OptimizerHyper::default());
        opt.step(&mut store, 0.5).unwrap();
        // Zero gradient: the adam term vanishes, leaving p * (1 - lr*wd).
        let expect = 2.0 * (1.0 - 0.5 * 0.01);
        for &w in store.iter().next().unwrap().value.data() {
            assert!((w - expect).abs() < 1e-12, "w {w}");
        }
    }

    #[test]
    fn frozen_params_never_move() {
        let mut store = ParamStore::new();
        store.add("frozen", Tensor::full(&[3], 1.0), false);
        store.iter_mut().next().unwrap().grad.fill(9.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, OptimizerHyper::default());
        for _ in 0..5 {
            opt.step(&mut store, 0.1).unwrap();
        }
        assert_eq!(store.iter().next().unwrap().value, Tensor::full(&[3], 1.0));
    }

    #[test]
    fn schedule_values() {
        assert_eq!(exp_schedule(2e-4, 0.90, 0), 2e-4);
        assert!((exp_schedule(2e-4, 0.90, 1) - 1.8e-4).abs() < 1e-12);
        assert!((exp_schedule(2e-4, 0.90, 2) - 1.62e-4).abs() < 1e-12);
    }
}
