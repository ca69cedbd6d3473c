//! Central-difference gradient checking.
//!
//! Compares analytic gradients produced by the tape against finite
//! differences of the scalar objective. Differences are accumulated in
//! 64-bit arithmetic throughout.

use crate::error::{McfError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Per-tensor result of a gradient check.
#[derive(Debug, Clone)]
pub struct TensorReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked_elements: usize,
}

/// Result of checking one objective over a parameter store.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorReport>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }

    pub fn failing(&self, tol: f64) -> Vec<&TensorReport> {
        self.tensors.iter().filter(|t| t.max_rel_err >= tol).collect()
    }
}

/// Relative error between analytic and numerical derivatives.
pub fn relative_error(analytic: f64, numerical: f64) -> f64 {
    // The denominator floor keeps zero-gradient parameters (where the
    // numerical estimate is pure roundoff) from reporting spurious error.
    (analytic - numerical).abs() / (analytic.abs() + numerical.abs()).max(1e-6)
}

/// Options for [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Cap on checked elements per tensor (evenly spaced); None checks all.
    pub max_elements_per_tensor: Option<usize>,
    /// Multiplier applied to analytic gradients before comparison. 1.0 for
    /// a real check; e.g. 1.01 as a deliberate-fault negative control.
    pub corrupt_factor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-3, max_elements_per_tensor: None, corrupt_factor: 1.0 }
    }
}

/// Check the analytic gradient of a scalar objective.
///
/// `eval(store, with_grad)` must return the objective value; when
/// `with_grad` is true it must also leave fresh gradients in the store
/// (zeroing them first). Frozen parameters are skipped.
pub fn grad_check<G>(
    store: &mut ParamStore,
    mut eval: G,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    G: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    let base = eval(store, true)?;
    if !base.is_finite() {
        return Err(McfError::Eval(format!("objective is non-finite: {base}")));
    }
    let analytic: Vec<Tensor> = store
        .iter()
        .map(|p| {
            let mut g = p.grad.clone();
            g.data_mut().iter_mut().for_each(|v| *v *= opts.corrupt_factor);
            g
        })
        .collect();

    let h = opts.step;
    let mut tensors = Vec::new();
    let mut overall: f64 = 0.0;
    let n_params = store.len();
    for idx in 0..n_params {
        let (name, trainable, numel) = {
            let p = store.iter().nth(idx).unwrap();
            (p.name.clone(), p.trainable, p.value.numel())
        };
        if !trainable || numel == 0 {
            continue;
        }
        let elems: Vec<usize> = match opts.max_elements_per_tensor {
            Some(cap) if cap < numel => {
                // Evenly spaced deterministic sample.
                (0..cap).map(|k| k * numel / cap).collect()
            }
            _ => (0..numel).collect(),
        };
        let mut max_rel: f64 = 0.0;
        for &e in &elems {
            let orig = nth_value(store, idx, e);
            set_nth(store, idx, e, orig + h);
            let f_plus = eval(store, false)?;
            set_nth(store, idx, e, orig - h);
            let f_minus = eval(store, false)?;
            set_nth(store, idx, e, orig);
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(McfError::Eval(format!(
                    "objective non-finite while perturbing {name}[{e}]"
                )));
            }
            let numerical = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[idx].data()[e];
            max_rel = max_rel.max(relative_error(a, numerical));
        }
        overall = overall.max(max_rel);
        tensors.push(TensorReport { name, max_rel_err: max_rel, checked_elements: elems.len() });
    }
    Ok(GradCheckReport { tensors, max_rel_err: overall })
}

fn nth_value(store: &ParamStore, idx: usize, e: usize) -> f64 {
    store.iter().nth(idx).unwrap().value.data()[e]
}

fn set_nth(store: &mut ParamStore, idx: usize, e: usize, v: f64) {
    store.iter_mut().nth(idx).unwrap().value.data_mut()[e] = v;
}

/// Ready-made check suites over the crate's building blocks, shared by the
/// command-line `gradcheck` subcommand and the language bindings.
pub mod suite {
    use super::{grad_check, GradCheckOptions, GradCheckReport};
    use crate::attention::MhaParams;
    use crate::autograd::{Mode, Tape};
    use crate::data::{gen_synthetic, SynthMode, SyntheticSpec};
    use crate::encoder::{EncoderVariant, MhaEncLayer, SagMhaEncLayer};
    use crate::error::Result;
    use crate::eval::{prepare, Target};
    use crate::layers::{LayerNorm, Linear};
    use crate::losses::emotic_loss_on_tape;
    use crate::model::{Geometry, McfConfig, McfModel, Streams, Task};
    use crate::params::ParamStore;
    use crate::rng::RngState;
    use crate::tensor::Tensor;

    fn rand_tensor(shape: &[usize], rng: &mut RngState) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = rng.next_gaussian();
        }
        t
    }

    /// Check each differentiable building block against finite differences.
    /// Returns (name, report) pairs.
    pub fn primitives(opts: &GradCheckOptions) -> Result<Vec<(String, GradCheckReport)>> {
        let mut out = Vec::new();

        // Linear + ReLU.
        {
            let mut rng = RngState::new(10);
            let mut store = ParamStore::new();
            let lin = Linear::new(&mut store, &mut rng, "lin", 3, 2, true);
            let x = rand_tensor(&[2, 3], &mut rng);
            let report = grad_check(
                &mut store,
                |st, with_grad| {
                    if with_grad {
                        st.zero_grads();
                    }
                    let mut tape = Tape::new();
                    let xv = tape.constant(x.clone());
                    let y = lin.forward(&mut tape, st, xv)?;
                    let y = tape.relu(y);
                    let obj = tape.sum_all(y);
                    if with_grad {
                        tape.backward_into(obj, 1.0, st)?;
                    }
                    Ok(tape.value(obj).scalar())
                },
                opts,
            )?;
            out.push(("linear+relu".to_string(), report));
        }

        // Layer norm behind a linear map.
        {
            let mut rng = RngState::new(11);
            let mut store = ParamStore::new();
            let lin = Linear::new(&mut store, &mut rng, "lin", 3, 4, true);
            let ln = LayerNorm::new(&mut store, "ln", 4, true);
            let x = rand_tensor(&[2, 3], &mut rng);
            let c = rand_tensor(&[4, 1], &mut rng);
            let report = grad_check(
                &mut store,
                |st, with_grad| {
                    if with_grad {
                        st.zero_grads();
                    }
                    let mut tape = Tape::new();
                    let xv = tape.constant(x.clone());
                    let h = lin.forward(&mut tape, st, xv)?;
                    let y = ln.forward(&mut tape, st, h)?;
                    let cv = tape.constant(c.clone());
                    let z = tape.matmul(y, cv)?;
                    let obj = tape.sum_all(z);
                    if with_grad {
                        tape.backward_into(obj, 1.0, st)?;
                    }
                    Ok(tape.value(obj).scalar())
                },
                opts,
            )?;
            out.push(("layer_norm".to_string(), report));
        }

        // Masked softmax read out through distinct column weights.
        {
            let mut rng = RngState::new(12);
            let mut store = ParamStore::new();
            let lin = Linear::new(&mut store, &mut rng, "lin", 3, 5, true);
            let x = rand_tensor(&[2, 3], &mut rng);
            let c = rand_tensor(&[5, 1], &mut rng);
            let mask = [true, false, true, true, false];
            let report = grad_check(
                &mut store,
                |st, with_grad| {
                    if with_grad {
                        st.zero_grads();
                    }
                    let mut tape = Tape::new();
                    let xv = tape.constant(x.clone());
                    let h = lin.forward(&mut tape, st, xv)?;
                    let s = tape.softmax_rows(h, Some(&mask))?;
                    let cv = tape.constant(c.clone());
                    let z = tape.matmul(s, cv)?;
                    let obj = tape.sum_all(z);
                    if with_grad {
                        tape.backward_into(obj, 1.0, st)?;
                    }
                    Ok(tape.value(obj).scalar())
                },
                opts,
            )?;
            out.push(("masked_softmax".to_string(), report));
        }

        // Multi-head attention with a key mask, pooled into a BCE loss.
        {
            let mut rng = RngState::new(13);
            let mut store = ParamStore::new();
            let mha = MhaParams::new(&mut store, &mut rng, "mha", 2, 8, true)?;
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[4, 8], &mut rng);
            let mask = [true, true, false, true];
            let targets = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
            let report = grad_check(
                &mut store,
                |st, with_grad| {
                    if with_grad {
                        st.zero_grads();
                    }
                    let mut tape = Tape::new();
                    let qv = tape.constant(q.clone());
                    let kv = tape.constant(k.clone());
                    let y = mha.forward(&mut tape, st, qv, kv, kv, Some(&mask))?;
                    let pooled = tape.masked_mean_rows(y, None)?;
                    let obj = tape.bce_with_logits(pooled, &targets)?;
                    if with_grad {
                        tape.backward_into(obj, 1.0, st)?;
                    }
                    Ok(tape.value(obj).scalar())
                },
                opts,
            )?;
            out.push(("multi_head_attention".to_string(), report));
        }

        // Encoder layers, both designs.
        {
            let mut rng = RngState::new(14);
            let mut store = ParamStore::new();
            let layer = MhaEncLayer::new(&mut store, &mut rng, "enc", 2, 8, 0.0, true)?;
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[4, 8], &mut rng);
            let target: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
            let report = grad_check(
                &mut store,
                |st, with_grad| {
                    if with_grad {
                        st.zero_grads();
                    }
                    let mut tape = Tape::new();
                    let mut drng = RngState::new(0);
                    let qv = tape.constant(q.clone());
                    let kv = tape.constant(k.clone());
                    let y = layer.forward(&mut tape, st, qv, kv, kv, None, Mode::Eval, &mut drng)?;
                    let pooled = tape.masked_mean_rows(y, None)?;
                    let obj = tape.mse_mean(pooled, &target)?;
                    if with_grad {
                        tape.backward_into(obj, 1.0, st)?;
                    }
                    Ok(tape.value(obj).scalar())
                },
                opts,
            )?;
            out.push(("mha_enc_layer".to_string(), report));
        }
        {
            let mut rng = RngState::new(15);
            let mut store = ParamStore::new();
            let layer = SagMhaEncLayer::new(&mut store, &mut rng, "sag", 2, 8, 0.0, true)?;
            let head = Linear::new(&mut store, &mut rng, "head", 8, 3, true);
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[4, 8], &mut rng);
            let report = grad_check(
                &mut store,
                |st, with_grad| {
                    if with_grad {
                        st.zero_grads();
                    }
                    let mut tape = Tape::new();
                    let mut drng = RngState::new(0);
                    let qv = tape.constant(q.clone());
                    let kv = tape.constant(k.clone());
                    let y = layer.forward(&mut tape, st, qv, kv, kv, None, Mode::Eval, &mut drng)?;
                    let pooled = tape.masked_mean_rows(y, None)?;
                    let logits = head.forward(&mut tape, st, pooled)?;
                    let obj = tape.cross_entropy_logits(logits, 1)?;
                    if with_grad {
                        tape.backward_into(obj, 1.0, st)?;
                    }
                    Ok(tape.value(obj).scalar())
                },
                opts,
            )?;
            out.push(("sag_mha_enc_layer".to_string(), report));
        }
        Ok(out)
    }

    /// Check the full model at toy geometry (dropout off). A smaller step
    /// than the default keeps ReLU kink crossings out of the estimate.
    pub fn full_model(
        variant: EncoderVariant,
        opts: &GradCheckOptions,
    ) -> Result<(String, GradCheckReport)> {
        let task = match variant {
            EncoderVariant::MhaEnc => Task::MultilabelCont,
            EncoderVariant::SagMhaEnc => Task::SingleLabel,
        };
        let mode = match task {
            Task::MultilabelCont => SynthMode::Linear,
            Task::SingleLabel => SynthMode::Xor,
        };
        let cfg = McfConfig {
            variant,
            layers: 2,
            heads: 2,
            d_model: 16,
            task,
            n_disc: match task {
                Task::MultilabelCont => 26,
                Task::SingleLabel => 2,
            },
            dropout_p: 0.0,
            streams: Streams::Both,
            head_hidden: Some(8),
            geometry: Geometry::toy(),
            freeze_pe_adapter: false,
        };
        let mut model = McfModel::new(cfg, 17)?;
        let bundle = gen_synthetic(&SyntheticSpec::new(mode, 2, 23, Geometry::toy()))?;
        let samples = prepare(&bundle)?;
        let mut store = std::mem::replace(&mut model.store, ParamStore::new());
        let report = grad_check(
            &mut store,
            |st, with_grad| {
                std::mem::swap(&mut model.store, st);
                let out = (|| {
                    if with_grad {
                        model.store.zero_grads();
                    }
                    let inv = 1.0 / samples.len() as f64;
                    let mut total = 0.0;
                    for s in &samples {
                        let mut tape = Tape::new();
                        let mut drng = RngState::new(0);
                        let vars =
                            model.forward_on_tape(&mut tape, &s.features, Mode::Eval, &mut drng)?;
                        let loss = match &s.target {
                            Target::Multi { y_disc, y_cont } => emotic_loss_on_tape(
                                &mut tape,
                                vars.disc_logits,
                                vars.cont.unwrap(),
                                y_disc,
                                y_cont,
                                0.6,
                                0.4,
                            )?,
                            Target::Single(y) => tape.cross_entropy_logits(vars.disc_logits, *y)?,
                        };
                        total += tape.value(loss).scalar();
                        if with_grad {
                            tape.backward_into(loss, inv, &mut model.store)?;
                        }
                    }
                    Ok(total / samples.len() as f64)
                })();
                std::mem::swap(&mut model.store, st);
                out
            },
            opts,
        )?;
        Ok((format!("full_model_{}", variant.as_str()), report))
    }

    /// Recommended options for [`full_model`].
    pub fn full_model_options() -> GradCheckOptions {
        GradCheckOptions {
            step: 1e-5,
            max_elements_per_tensor: Some(6),
            corrupt_factor: 1.0,
        }
    }
}
