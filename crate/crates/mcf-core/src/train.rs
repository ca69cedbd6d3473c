//! The epoch loop: seeded shuffling, mini-batches, per-epoch validation,
//! and best-validation checkpoint retention.

use crate::autograd::{Mode, Tape};
use crate::error::{McfError, Result};
use crate::eval::{evaluate, LabeledSample, Target};
use crate::losses::{caer_loss_on_tape, emotic_loss_on_tape};
use crate::metrics::EvalReport;
use crate::model::{McfModel, Task};
use crate::optim::{exp_schedule, Optimizer, OptimizerHyper, OptimizerKind};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr0: f64,
    /// Per-epoch exponential decay factor; 1.0 keeps the rate constant.
    pub gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: u64,
    pub hyper: OptimizerHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::AdamW,
            lr0: 2e-5,
            gamma: 1.0,
            batch_size: 32,
            epochs: 50,
            lambda1: 0.8,
            lambda2: 0.2,
            seed: 0,
            hyper: OptimizerHyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, task: Task) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(McfError::Config("lr0 must be > 0".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(McfError::Config("gamma must be in (0, 1]".into()));
        }
        if self.batch_size == 0 {
            return Err(McfError::Config("batch_size must be >= 1".into()));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(McfError::Config("loss weights must be >= 0".into()));
        }
        if task == Task::MultilabelCont && self.lambda1 + self.lambda2 <= 0.0 {
            return Err(McfError::Config(
                "lambda1 + lambda2 must be > 0 for the multilabel task".into(),
            ));
        }
        Ok(())
    }
}

/// One completed epoch.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_report: Option<EvalReport>,
}

/// Per-epoch records plus the retained best epoch.
#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters the model retains (lowest validation loss,
    /// or the last epoch when no validation set was given).
    pub best_epoch: usize,
}

impl TrainHistory {
    /// Line-delimited text export. Deterministic for a fixed run.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# epoch lr train_loss val_loss metrics\n");
        for r in &self.records {
            out.push_str(&format!(
                "epoch={} lr={:.10e} train_loss={:.8} val_loss={}",
                r.epoch,
                r.lr,
                r.train_loss,
                match r.val_loss {
                    Some(v) => format!("{v:.8}"),
                    None => "none".into(),
                }
            ));
            if let Some(rep) = &r.val_report {
                if let Some(m) = rep.map {
                    out.push_str(&format!(" map={m:.6}"));
                }
                if let Some(m) = rep.avd_mse {
                    out.push_str(&format!(" avd_mse={:.8}", (m[0] + m[1] + m[2]) / 3.0));
                }
                if let Some(a) = rep.accuracy {
                    out.push_str(&format!(" accuracy={a:.6}"));
                }
                if let Some(f) = rep.macro_f1 {
                    out.push_str(&format!(" macro_f1={f:.6}"));
                }
            }
            out.push('\n');
        }
        out.push_str(&format!("best_epoch={}\n", self.best_epoch));
        out
    }
}

fn sample_loss_on_tape(
    model: &McfModel,
    tape: &mut Tape,
    sample: &LabeledSample,
    cfg: &TrainConfig,
    mode: Mode,
    rng: &mut RngState,
) -> Result<crate::autograd::VarId> {
    let vars = model.forward_on_tape(tape, &sample.features, mode, rng)?;
    match (&sample.target, model.config.task) {
        (Target::Multi { y_disc, y_cont }, Task::MultilabelCont) => {
            let cont = vars.cont.expect("multilabel model emits continuous outputs");
            emotic_loss_on_tape(
                tape,
                vars.disc_logits,
                cont,
                y_disc,
                y_cont,
                cfg.lambda1,
                cfg.lambda2,
            )
        }
        (Target::Single(y), Task::SingleLabel) => caer_loss_on_tape(tape, vars.disc_logits, *y),
        _ => Err(McfError::Config(
            "dataset task does not match model task".into(),
        )),
    }
}

/// Mean eval-mode loss over a set.
pub fn mean_loss(model: &McfModel, samples: &[LabeledSample], cfg: &TrainConfig) -> Result<f64> {
    let mut rng = RngState::new(0);
    let mut total = 0.0;
    for s in samples {
        let mut tape = Tape::new();
        let loss = sample_loss_on_tape(model, &mut tape, s, cfg, Mode::Eval, &mut rng)?;
        total += tape.value(loss).scalar();
    }
    Ok(total / samples.len() as f64)
}

/// Train the model. Shuffles per epoch with a seeded generator, keeps the
/// last partial batch, validates each epoch, and leaves the model at the
/// parameters of the best validation epoch.
pub fn fit(
    model: &mut McfModel,
    train: &[LabeledSample],
    val: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if train.is_empty() {
        return Err(McfError::Config("empty training set".into()));
    }
    cfg.validate(model.config.task)?;
    for s in train.iter().chain(val) {
        s.features.check_geometry(&model.config.geometry)?;
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.hyper.clone());
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;

    for epoch in 0..cfg.epochs {
        let lr = exp_schedule(cfg.lr0, cfg.gamma, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng = RngState::new(cfg.seed).derive(0x0E).derive(epoch as u64);
        shuffle_rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grads();
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut drop_rng =
                    RngState::new(cfg.seed).derive(0xD0).derive(epoch as u64).derive(i as u64);
                let mut tape = Tape::new();
                let loss =
                    sample_loss_on_tape(model, &mut tape, &train[i], cfg, Mode::Train, &mut drop_rng)?;
                epoch_loss += tape.value(loss).scalar();
                tape.backward_into(loss, inv, &mut model.store)?;
            }
            opt.step(&mut model.store, lr)?;
        }
        let train_loss = epoch_loss / train.len() as f64;

        let (val_loss, val_report) = if val.is_empty() {
            (None, None)
        } else {
            (Some(mean_loss(model, val, cfg)?), Some(evaluate(model, val)?))
        };
        if let Some(vl) = val_loss {
            let better = match &best {
                Some((_, b, _)) => vl < *b,
                None => true,
            };
            if better {
                let snapshot = model.store.iter().map(|p| p.value.clone()).collect();
                best = Some((epoch, vl, snapshot));
            }
        }
        records.push(EpochRecord { epoch, lr, train_loss, val_loss, val_report });
    }

    let best_epoch = match best {
        Some((epoch, _, snapshot)) => {
            for (p, v) in model.store.iter_mut().zip(snapshot) {
                p.value = v;
            }
            epoch
        }
        None => cfg.epochs.saturating_sub(1),
    };
    Ok(TrainHistory { records, best_epoch })
}
