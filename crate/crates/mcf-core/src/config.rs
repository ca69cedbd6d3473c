//! Run configuration: named presets, a plain-text `key = value` file
//! format, and flag-style overrides. Precedence is preset, then file,
//! then individual overrides; unknown keys are rejected.

use std::path::{Path, PathBuf};

use crate::encoder::EncoderVariant;
use crate::error::{McfError, Result};
use crate::model::{Geometry, McfConfig, Streams, Task};
use crate::optim::OptimizerKind;
use crate::train::TrainConfig;

/// Everything a run needs: model shape, training hyperparameters, and
/// file locations.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: McfConfig,
    pub train: TrainConfig,
    pub bundle: Option<PathBuf>,
    pub val_bundle: Option<PathBuf>,
    /// Used to carve a validation split off `bundle` when `val_bundle`
    /// is absent; 0 validates on the training set itself.
    pub val_fraction: f64,
    pub checkpoint: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

pub const PRESET_NAMES: &[&str] = &[
    "emotic-mha",
    "caer-sag",
    "toy-mha",
    "toy-sag",
    "toy-linear",
    "fg-only",
    "vs-only",
];

fn toy_model(variant: EncoderVariant) -> McfConfig {
    McfConfig {
        variant,
        layers: 2,
        heads: 2,
        d_model: 16,
        task: Task::SingleLabel,
        n_disc: 2,
        dropout_p: 0.1,
        streams: Streams::Both,
        head_hidden: Some(32),
        geometry: Geometry::toy(),
        freeze_pe_adapter: false,
    }
}

fn toy_train() -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Adam,
        lr0: 3e-3,
        gamma: 1.0,
        batch_size: 16,
        epochs: 40,
        lambda1: 1.0,
        lambda2: 0.0,
        seed: 0,
        hyper: Default::default(),
    }
}

impl RunConfig {
    /// Baseline configuration when no preset is named.
    pub fn default_toy() -> RunConfig {
        RunConfig {
            model: toy_model(EncoderVariant::MhaEnc),
            train: toy_train(),
            bundle: None,
            val_bundle: None,
            val_fraction: 0.2,
            checkpoint: None,
            history: None,
            report: None,
        }
    }

    pub fn preset(name: &str) -> Result<RunConfig> {
        let mut rc = RunConfig::default_toy();
        match name {
            "emotic-mha" => {
                rc.model = McfConfig::emotic_mha();
                rc.train = TrainConfig {
                    optimizer: OptimizerKind::AdamW,
                    lr0: 2e-5,
                    gamma: 1.0,
                    batch_size: 32,
                    epochs: 50,
                    lambda1: 0.8,
                    lambda2: 0.2,
                    seed: 0,
                    hyper: Default::default(),
                };
            }
            "caer-sag" => {
                rc.model = McfConfig::caer_sag();
                rc.train = TrainConfig {
                    optimizer: OptimizerKind::Adam,
                    lr0: 2e-4,
                    gamma: 0.90,
                    batch_size: 64,
                    epochs: 50,
                    lambda1: 1.0,
                    lambda2: 0.0,
                    seed: 0,
                    hyper: Default::default(),
                };
            }
            "toy-mha" => {}
            "toy-sag" => rc.model.variant = EncoderVariant::SagMhaEnc,
            "toy-linear" => {
                rc.model.task = Task::MultilabelCont;
                rc.model.n_disc = 26;
                rc.model.head_hidden = Some(64);
                rc.train.lambda1 = 0.8;
                rc.train.lambda2 = 0.2;
            }
            "fg-only" => rc.model.streams = Streams::FgOnly,
            "vs-only" => rc.model.streams = Streams::VsOnly,
            other => {
                return Err(McfError::Config(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        }
        Ok(rc)
    }

    /// Apply every `key = value` line of a config file in order.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                McfError::Config(format!(
                    "{}:{}: expected 'key = value', got '{line}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply_kv(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Apply one key. Unknown keys are errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| McfError::Config(format!("bad value '{value}' for key '{key}'")))
        }
        match key {
            "preset" => *self = RunConfig::preset(value)?,
            "variant" => self.model.variant = EncoderVariant::parse(value)?,
            "layers" => self.model.layers = num(key, value)?,
            "heads" => self.model.heads = num(key, value)?,
            "d_model" => self.model.d_model = num(key, value)?,
            "task" => self.model.task = Task::parse(value)?,
            "n_disc" => self.model.n_disc = num(key, value)?,
            "dropout" => self.model.dropout_p = num(key, value)?,
            "streams" => self.model.streams = Streams::parse(value)?,
            "head_hidden" => {
                self.model.head_hidden = match value {
                    "none" => None,
                    _ => Some(num(key, value)?),
                }
            }
            "freeze_pe_adapter" => self.model.freeze_pe_adapter = num(key, value)?,
            "geometry" => {
                self.model.geometry = match value {
                    "paper" => Geometry::paper(),
                    "toy" => Geometry::toy(),
                    _ => {
                        return Err(McfError::Config(format!(
                            "geometry must be 'paper' or 'toy', got '{value}'"
                        )))
                    }
                }
            }
            "t_pe" => self.model.geometry.t_pe = num(key, value)?,
            "d_pe" => self.model.geometry.d_pe = num(key, value)?,
            "t_fg" => self.model.geometry.t_fg = num(key, value)?,
            "d_fg" => self.model.geometry.d_fg = num(key, value)?,
            "t_vs" => self.model.geometry.t_vs = num(key, value)?,
            "d_vs" => self.model.geometry.d_vs = num(key, value)?,
            "optimizer" => self.train.optimizer = OptimizerKind::parse(value)?,
            "lr0" => self.train.lr0 = num(key, value)?,
            "gamma" => self.train.gamma = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "lambda1" => self.train.lambda1 = num(key, value)?,
            "lambda2" => self.train.lambda2 = num(key, value)?,
            "seed" => self.train.seed = num(key, value)?,
            "momentum" => self.train.hyper.momentum = num(key, value)?,
            "beta1" => self.train.hyper.beta1 = num(key, value)?,
            "beta2" => self.train.hyper.beta2 = num(key, value)?,
            "eps" => self.train.hyper.eps = num(key, value)?,
            "weight_decay" => self.train.hyper.weight_decay = num(key, value)?,
            "bundle" => self.bundle = Some(PathBuf::from(value)),
            "val_bundle" => self.val_bundle = Some(PathBuf::from(value)),
            "val_fraction" => {
                let f: f64 = num(key, value)?;
                if !(0.0..1.0).contains(&f) {
                    return Err(McfError::Config("val_fraction must be in [0, 1)".into()));
                }
                self.val_fraction = f;
            }
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "history" => self.history = Some(PathBuf::from(value)),
            "report" => self.report = Some(PathBuf::from(value)),
            other => return Err(McfError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate(self.model.task)
    }
}
