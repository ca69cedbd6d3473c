//! The full context-fusion network: stream adapters, two encoder blocks,
//! pooled fusion, and task heads.

use crate::autograd::{Mode, Tape, VarId};
use crate::encoder::{CmEncBlock, EncoderVariant};
use crate::error::{McfError, Result};
use crate::layers::Linear;
use crate::params::ParamStore;
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Prediction target shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Multilabel discrete classes plus 3 continuous affect values.
    MultilabelCont,
    /// Single discrete class.
    SingleLabel,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::MultilabelCont => "multilabel_cont",
            Task::SingleLabel => "single_label",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "multilabel_cont" => Ok(Task::MultilabelCont),
            "single_label" => Ok(Task::SingleLabel),
            other => Err(McfError::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// Which context streams are active. Single-stream settings exist for
/// ablation runs; fusion then uses that stream's pooled output alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Streams {
    Both,
    FgOnly,
    VsOnly,
}

impl Streams {
    pub fn as_str(&self) -> &'static str {
        match self {
            Streams::Both => "both",
            Streams::FgOnly => "fg_only",
            Streams::VsOnly => "vs_only",
        }
    }

    pub fn parse(s: &str) -> Result<Streams> {
        match s {
            "both" => Ok(Streams::Both),
            "fg_only" => Ok(Streams::FgOnly),
            "vs_only" => Ok(Streams::VsOnly),
            other => Err(McfError::Config(format!("unknown streams setting '{other}'"))),
        }
    }
}

/// Token geometry of the three input streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub t_pe: usize,
    pub d_pe: usize,
    pub t_fg: usize,
    pub d_fg: usize,
    pub t_vs: usize,
    pub d_vs: usize,
}

impl Geometry {
    /// Token lengths and widths of the upstream expert encoders.
    pub fn paper() -> Geometry {
        Geometry { t_pe: 49, d_pe: 512, t_fg: 512, d_fg: 768, t_vs: 197, d_vs: 768 }
    }

    /// Small geometry for gradient checks and fast tests.
    pub fn toy() -> Geometry {
        Geometry { t_pe: 4, d_pe: 16, t_fg: 6, d_fg: 16, t_vs: 5, d_vs: 16 }
    }
}

/// Model configuration.
#[derive(Debug, Clone)]
pub struct McfConfig {
    pub variant: EncoderVariant,
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub task: Task,
    pub n_disc: usize,
    pub dropout_p: f64,
    pub streams: Streams,
    /// Optional hidden width for the discrete head. None keeps a plain
    /// linear head.
    pub head_hidden: Option<usize>,
    pub geometry: Geometry,
    /// Freeze the person-stream adapter (analogue of freezing the person
    /// backbone).
    pub freeze_pe_adapter: bool,
}

impl McfConfig {
    /// MHA_enc configuration: L=4, 8 heads, d=512, 26 classes + AVD.
    pub fn emotic_mha() -> McfConfig {
        McfConfig {
            variant: EncoderVariant::MhaEnc,
            layers: 4,
            heads: 8,
            d_model: 512,
            task: Task::MultilabelCont,
            n_disc: 26,
            dropout_p: 0.1,
            streams: Streams::Both,
            head_hidden: None,
            geometry: Geometry::paper(),
            freeze_pe_adapter: true,
        }
    }

    /// SAG-MHA_enc configuration: L=3, 8 heads, d=768, 7 classes.
    pub fn caer_sag() -> McfConfig {
        McfConfig {
            variant: EncoderVariant::SagMhaEnc,
            layers: 3,
            heads: 8,
            d_model: 768,
            task: Task::SingleLabel,
            n_disc: 7,
            dropout_p: 0.1,
            streams: Streams::Both,
            head_hidden: None,
            geometry: Geometry::paper(),
            freeze_pe_adapter: false,
        }
    }

    /// Width of the fused embedding feeding the heads.
    pub fn fusion_width(&self) -> usize {
        match self.streams {
            Streams::Both => 2 * self.d_model,
            _ => self.d_model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(McfError::Config("layers must be >= 1".into()));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(McfError::Config(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.n_disc == 0 {
            return Err(McfError::Config("n_disc must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(McfError::Config(format!(
                "dropout_p {} not in [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

/// One sample's precomputed feature streams.
#[derive(Debug, Clone)]
pub struct StreamSample {
    pub e_pe: Tensor,
    pub e_fg: Tensor,
    pub e_vs: Tensor,
    pub fg_mask: Vec<bool>,
}

impl StreamSample {
    pub fn check_geometry(&self, g: &Geometry) -> Result<()> {
        let checks = [
            ("t_pe", self.e_pe.rows(), g.t_pe),
            ("d_pe", self.e_pe.cols(), g.d_pe),
            ("t_fg", self.e_fg.rows(), g.t_fg),
            ("d_fg", self.e_fg.cols(), g.d_fg),
            ("t_vs", self.e_vs.rows(), g.t_vs),
            ("d_vs", self.e_vs.cols(), g.d_vs),
        ];
        for (field, got, want) in checks {
            if got != want {
                return Err(McfError::FieldMismatch {
                    field: field.into(),
                    detail: format!("sample has {got}, model expects {want}"),
                });
            }
        }
        if self.fg_mask.len() != g.t_fg {
            return Err(McfError::Mask(format!(
                "fg_mask length {} vs t_fg {}",
                self.fg_mask.len(),
                g.t_fg
            )));
        }
        if !self.fg_mask.iter().any(|&b| b) {
            return Err(McfError::Mask("sample has no valid foreground token".into()));
        }
        Ok(())
    }
}

/// Discrete head, optionally with one hidden ReLU layer. The paper's
/// fully-connected heads leave depth open; parity-style interactions
/// between the two pooled streams need the hidden layer.
#[derive(Debug, Clone)]
pub struct Head {
    pub hidden: Option<Linear>,
    pub out: Linear,
}

impl Head {
    fn new(
        store: &mut ParamStore,
        rng: &mut RngState,
        name: &str,
        d_in: usize,
        hidden: Option<usize>,
        d_out: usize,
    ) -> Head {
        match hidden {
            Some(h) => Head {
                hidden: Some(Linear::new(store, rng, &format!("{name}/hidden"), d_in, h, true)),
                out: Linear::new(store, rng, &format!("{name}/out"), h, d_out, true),
            },
            None => Head {
                hidden: None,
                out: Linear::new(store, rng, &format!("{name}/out"), d_in, d_out, true),
            },
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        let x = match &self.hidden {
            Some(lin) => {
                let h = lin.forward(tape, store, x)?;
                tape.relu(h)
            }
            None => x,
        };
        self.out.forward(tape, store, x)
    }
}

/// Model output: unbounded logits; losses own the nonlinearity.
#[derive(Debug, Clone)]
pub struct McfOutput {
    pub disc_logits: Tensor,
    pub cont: Option<Tensor>,
}

/// Output node handles for building a loss on the same tape.
pub struct McfForwardVars {
    pub disc_logits: VarId,
    pub cont: Option<VarId>,
    pub fusion: VarId,
}

/// The assembled network. Parameters live in `store`; the structure holds
/// handles only.
#[derive(Debug, Clone)]
pub struct McfModel {
    pub store: ParamStore,
    pub config: McfConfig,
    pub adapter_pe: Linear,
    pub adapter_fg: Option<Linear>,
    pub adapter_vs: Option<Linear>,
    pub fg_block: Option<CmEncBlock>,
    pub vs_block: Option<CmEncBlock>,
    pub head_disc: Head,
    pub head_cont: Option<Head>,
    pub seed: u64,
}

impl McfModel {
    pub fn new(config: McfConfig, seed: u64) -> Result<McfModel> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = RngState::new(seed).derive(0x11);
        let g = config.geometry;
        let d = config.d_model;

        // Adapters are always present so freeze/finetune ablations have a
        // uniform knob; identity-initialized when square.
        let adapter_pe = Linear::new_identity(
            &mut store,
            &mut rng,
            "adapter_pe",
            g.d_pe,
            d,
            !config.freeze_pe_adapter,
        );
        let use_fg = config.streams != Streams::VsOnly;
        let use_vs = config.streams != Streams::FgOnly;
        let adapter_fg = use_fg
            .then(|| Linear::new_identity(&mut store, &mut rng, "adapter_fg", g.d_fg, d, true));
        let adapter_vs = use_vs
            .then(|| Linear::new_identity(&mut store, &mut rng, "adapter_vs", g.d_vs, d, true));
        let fg_block = if use_fg {
            Some(CmEncBlock::new(
                &mut store,
                &mut rng,
                "fg",
                config.variant,
                config.layers,
                config.heads,
                d,
                config.dropout_p,
                true,
            )?)
        } else {
            None
        };
        let vs_block = if use_vs {
            Some(CmEncBlock::new(
                &mut store,
                &mut rng,
                "vs",
                config.variant,
                config.layers,
                config.heads,
                d,
                config.dropout_p,
                true,
            )?)
        } else {
            None
        };
        let fusion_width = config.fusion_width();
        let head_disc = Head::new(
            &mut store,
            &mut rng,
            "head_disc",
            fusion_width,
            config.head_hidden,
            config.n_disc,
        );
        let head_cont = (config.task == Task::MultilabelCont).then(|| {
            Head::new(&mut store, &mut rng, "head_cont", fusion_width, config.head_hidden, 3)
        });
        Ok(McfModel {
            store,
            config,
            adapter_pe,
            adapter_fg,
            adapter_vs,
            fg_block,
            vs_block,
            head_disc,
            head_cont,
            seed,
        })
    }

    /// Per-token linear projection of a raw stream into model width.
    fn project(&self, tape: &mut Tape, adapter: &Linear, e: &Tensor) -> Result<VarId> {
        if e.cols() != adapter.d_in {
            return Err(McfError::Dim(format!(
                "stream width {} does not match adapter input {}",
                e.cols(),
                adapter.d_in
            )));
        }
        let x = tape.constant(e.clone());
        adapter.forward(tape, &self.store, x)
    }

    /// Foreground-guided stream: query = projected person tokens,
    /// key/value = projected caption tokens under the caption mask.
    pub fn foreground_stream(
        &self,
        tape: &mut Tape,
        sample: &StreamSample,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<VarId> {
        let block = self
            .fg_block
            .as_ref()
            .ok_or_else(|| McfError::Config("foreground stream disabled".into()))?;
        let adapter = self.adapter_fg.as_ref().unwrap();
        let q = self.project(tape, &self.adapter_pe, &sample.e_pe)?;
        let kv = self.project(tape, adapter, &sample.e_fg)?;
        block.forward(tape, &self.store, q, kv, kv, Some(&sample.fg_mask), mode, rng)
    }

    /// Visual-scene-guided stream: key/value = projected scene tokens,
    /// no mask (all scene tokens are valid).
    pub fn visual_stream(
        &self,
        tape: &mut Tape,
        sample: &StreamSample,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<VarId> {
        let block = self
            .vs_block
            .as_ref()
            .ok_or_else(|| McfError::Config("visual stream disabled".into()))?;
        let adapter = self.adapter_vs.as_ref().unwrap();
        let q = self.project(tape, &self.adapter_pe, &sample.e_pe)?;
        let kv = self.project(tape, adapter, &sample.e_vs)?;
        block.forward(tape, &self.store, q, kv, kv, None, mode, rng)
    }

    /// Forward pass returning tape handles, for loss construction.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        sample: &StreamSample,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<McfForwardVars> {
        sample.check_geometry(&self.config.geometry)?;
        let mut pooled = Vec::new();
        if self.fg_block.is_some() {
            let fg = self.foreground_stream(tape, sample, mode, rng)?;
            pooled.push(tape.masked_mean_rows(fg, None)?);
        }
        if self.vs_block.is_some() {
            let vs = self.visual_stream(tape, sample, mode, rng)?;
            pooled.push(tape.masked_mean_rows(vs, None)?);
        }
        // Fusion order is fixed: foreground half first.
        let fusion = if pooled.len() == 1 {
            pooled[0]
        } else {
            tape.concat_cols(&pooled)?
        };
        let disc_logits = self.head_disc.forward(tape, &self.store, fusion)?;
        let cont = match &self.head_cont {
            Some(h) => Some(h.forward(tape, &self.store, fusion)?),
            None => None,
        };
        Ok(McfForwardVars { disc_logits, cont, fusion })
    }

    /// Plain forward pass. Eval mode is deterministic.
    pub fn forward(
        &self,
        sample: &StreamSample,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<McfOutput> {
        let mut tape = Tape::new();
        let vars = self.forward_on_tape(&mut tape, sample, mode, rng)?;
        Ok(McfOutput {
            disc_logits: tape.value(vars.disc_logits).clone(),
            cont: vars.cont.map(|c| tape.value(c).clone()),
        })
    }
}
