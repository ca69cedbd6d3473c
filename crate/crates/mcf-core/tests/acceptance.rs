//! Acceptance suite: ten numbered criteria with pinned tolerances. Each
//! test prints an explicit pass/fail line for its criterion.

use std::time::Instant;

use mcf_core::attention::MhaParams;
use mcf_core::autograd::{Mode, Tape};
use mcf_core::data::{
    gen_synthetic, read_bundle, split_dataset, write_bundle, SynthMode, SyntheticSpec,
};
use mcf_core::encoder::{CmEncBlock, EncLayer, EncoderVariant, MhaEncLayer, SagMhaEncLayer};
use mcf_core::error::McfError;
use mcf_core::eval::{evaluate, prepare, LabeledSample, Target};
use mcf_core::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use mcf_core::layers::{LayerNorm, Linear, LAYER_NORM_EPS};
use mcf_core::losses::{caer_loss, emotic_loss, emotic_loss_on_tape};
use mcf_core::metrics::{average_precision, format_mean_std, mean_ap};
use mcf_core::model::{Geometry, McfConfig, McfModel, Streams, Task};
use mcf_core::optim::{OptimizerHyper, OptimizerKind};
use mcf_core::params::ParamStore;
use mcf_core::rng::RngState;
use mcf_core::tensor::Tensor;
use mcf_core::train::{fit, TrainConfig};

type CheckResult = std::result::Result<(), String>;

fn criterion(n: usize, name: &str, body: impl FnOnce() -> CheckResult) {
    match body() {
        Ok(()) => println!("ACCEPTANCE {n} ({name}): PASS"),
        Err(msg) => {
            println!("ACCEPTANCE {n} ({name}): FAIL — {msg}");
            panic!("acceptance criterion {n} ({name}) failed: {msg}");
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn rand_tensor(shape: &[usize], rng: &mut RngState) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.next_gaussian();
    }
    t
}

fn standardize_rows(mut t: Tensor) -> Tensor {
    let cols = t.cols();
    for r in 0..t.rows() {
        let row = &mut t.data_mut()[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv = 1.0 / var.sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    t
}

// ---------------------------------------------------------------- 1 ----

/// Run a grad check and fold the report into a pass/fail message.
fn expect_grads(
    label: &str,
    report: Result<GradCheckReport, McfError>,
    tol: f64,
) -> CheckResult {
    let report = report.map_err(|e| format!("{label}: grad check errored: {e}"))?;
    ensure!(
        report.passed(tol),
        "{label}: max relative error {:.3e} over tolerance {tol:.0e} (worst tensors: {:?})",
        report.max_rel_err,
        report
            .failing(tol)
            .iter()
            .map(|t| (&t.name, t.max_rel_err))
            .collect::<Vec<_>>()
    );
    Ok(())
}

#[test]
fn criterion_01_gradient_suite() {
    criterion(1, "gradient suite", || {
        let started = Instant::now();
        let tol = 1e-4;
        let opts = GradCheckOptions::default();

        // Linear + ReLU.
        {
            let mut rng = RngState::new(10);
            let mut store = ParamStore::new();
            let lin = Linear::new(&mut store, &mut rng, "lin", 3, 2, true);
            let x = rand_tensor(&[2, 3], &mut rng);
            expect_grads(
                "linear+relu",
                grad_check(
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
                    &opts,
                ),
                tol,
            )?;
        }

        // Layer norm behind a linear map, read out through a weighting
        // matrix so its gradient is nondegenerate.
        {
            let mut rng = RngState::new(11);
            let mut store = ParamStore::new();
            let lin = Linear::new(&mut store, &mut rng, "lin", 3, 4, true);
            let ln = LayerNorm::new(&mut store, "ln", 4, true);
            let x = rand_tensor(&[2, 3], &mut rng);
            let c = rand_tensor(&[4, 1], &mut rng);
            expect_grads(
                "layer_norm",
                grad_check(
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
                        let z = tape.relu(z);
                        let obj = tape.sum_all(z);
                        if with_grad {
                            tape.backward_into(obj, 1.0, st)?;
                        }
                        Ok(tape.value(obj).scalar())
                    },
                    &opts,
                ),
                tol,
            )?;
        }

        // Masked softmax (sum of each row is constant, so read out through
        // distinct column weights).
        {
            let mut rng = RngState::new(12);
            let mut store = ParamStore::new();
            let lin = Linear::new(&mut store, &mut rng, "lin", 3, 5, true);
            let x = rand_tensor(&[2, 3], &mut rng);
            let c = rand_tensor(&[5, 1], &mut rng);
            let mask = [true, false, true, true, false];
            expect_grads(
                "masked softmax",
                grad_check(
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
                    &opts,
                ),
                tol,
            )?;
        }

        // Multi-head attention with a key mask, pooled into a BCE loss.
        {
            let mut rng = RngState::new(13);
            let mut store = ParamStore::new();
            let mha = MhaParams::new(&mut store, &mut rng, "mha", 2, 8, true)
                .map_err(|e| e.to_string())?;
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[4, 8], &mut rng);
            let mask = [true, true, false, true];
            let targets = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
            expect_grads(
                "multi-head attention",
                grad_check(
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
                    &opts,
                ),
                tol,
            )?;
        }

        // Full MHA_enc layer into an MSE loss (dropout off).
        {
            let mut rng = RngState::new(14);
            let mut store = ParamStore::new();
            let layer = MhaEncLayer::new(&mut store, &mut rng, "enc", 2, 8, 0.0, true)
                .map_err(|e| e.to_string())?;
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[4, 8], &mut rng);
            let target: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
            expect_grads(
                "MHA_enc layer",
                grad_check(
                    &mut store,
                    |st, with_grad| {
                        if with_grad {
                            st.zero_grads();
                        }
                        let mut tape = Tape::new();
                        let mut drng = RngState::new(0);
                        let qv = tape.constant(q.clone());
                        let kv = tape.constant(k.clone());
                        let y = layer.forward(
                            &mut tape, st, qv, kv, kv, None, Mode::Eval, &mut drng,
                        )?;
                        let pooled = tape.masked_mean_rows(y, None)?;
                        let obj = tape.mse_mean(pooled, &target)?;
                        if with_grad {
                            tape.backward_into(obj, 1.0, st)?;
                        }
                        Ok(tape.value(obj).scalar())
                    },
                    &opts,
                ),
                tol,
            )?;
        }

        // Full SAG-MHA_enc layer into a cross-entropy loss.
        {
            let mut rng = RngState::new(15);
            let mut store = ParamStore::new();
            let layer = SagMhaEncLayer::new(&mut store, &mut rng, "sag", 2, 8, 0.0, true)
                .map_err(|e| e.to_string())?;
            let head = Linear::new(&mut store, &mut rng, "head", 8, 3, true);
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[4, 8], &mut rng);
            expect_grads(
                "SAG-MHA_enc layer",
                grad_check(
                    &mut store,
                    |st, with_grad| {
                        if with_grad {
                            st.zero_grads();
                        }
                        let mut tape = Tape::new();
                        let mut drng = RngState::new(0);
                        let qv = tape.constant(q.clone());
                        let kv = tape.constant(k.clone());
                        let y = layer.forward(
                            &mut tape, st, qv, kv, kv, None, Mode::Eval, &mut drng,
                        )?;
                        let pooled = tape.masked_mean_rows(y, None)?;
                        let logits = head.forward(&mut tape, st, pooled)?;
                        let obj = tape.cross_entropy_logits(logits, 1)?;
                        if with_grad {
                            tape.backward_into(obj, 1.0, st)?;
                        }
                        Ok(tape.value(obj).scalar())
                    },
                    &opts,
                ),
                tol,
            )?;
        }

        // Full model, both variants at toy geometry (L=2, heads=2, d=16,
        // dropout off), mean loss over two samples, subsampled elements.
        for (variant, task) in [
            (EncoderVariant::MhaEnc, Task::MultilabelCont),
            (EncoderVariant::SagMhaEnc, Task::SingleLabel),
        ] {
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
            let mut model = McfModel::new(cfg, 17).map_err(|e| e.to_string())?;
            let bundle = gen_synthetic(&SyntheticSpec::new(mode, 2, 23, Geometry::toy()))
                .map_err(|e| e.to_string())?;
            let samples = prepare(&bundle).map_err(|e| e.to_string())?;
            let mut store = std::mem::replace(&mut model.store, ParamStore::new());
            let model_opts = GradCheckOptions {
                step: 1e-5,
                max_elements_per_tensor: Some(6),
                ..GradCheckOptions::default()
            };
            let result = grad_check(
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
                            let vars = model.forward_on_tape(
                                &mut tape, &s.features, Mode::Eval, &mut drng,
                            )?;
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
                                Target::Single(y) => {
                                    tape.cross_entropy_logits(vars.disc_logits, *y)?
                                }
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
                &model_opts,
            );
            expect_grads(&format!("full model {}", variant.as_str()), result, tol)?;
        }

        let elapsed = started.elapsed();
        ensure!(
            elapsed.as_secs() < 60,
            "gradient suite took {elapsed:?}, over the 60 s budget"
        );
        println!("  gradient suite completed in {elapsed:?}");
        Ok(())
    });
}

// ---------------------------------------------------------------- 2 ----

#[test]
fn criterion_02_algebraic_reductions() {
    criterion(2, "algebraic reductions", || {
        let mut rng = RngState::new(31);

        // (a) MHA_enc with zeroed sublayer outputs reduces to LN(Q).
        {
            let mut store = ParamStore::new();
            let layer = MhaEncLayer::new(&mut store, &mut rng, "enc", 2, 8, 0.0, true)
                .map_err(|e| e.to_string())?;
            for id in [
                layer.mha.proj_o.w,
                layer.mha.proj_o.b,
                layer.ffn.lin2.w,
                layer.ffn.lin2.b,
            ] {
                store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            // Standardized query rows make the double-normalization in the
            // reduced layer agree with a single LN to O(eps^2).
            let q = standardize_rows(rand_tensor(&[3, 8], &mut rng));
            let k = rand_tensor(&[4, 8], &mut rng);
            let mut tape = Tape::new();
            let mut drng = RngState::new(0);
            let qv = tape.constant(q.clone());
            let kv = tape.constant(k);
            let out = layer
                .forward(&mut tape, &store, qv, kv, kv, None, Mode::Eval, &mut drng)
                .map_err(|e| e.to_string())?;
            let gamma = tape.constant(Tensor::full(&[8], 1.0));
            let beta = tape.constant(Tensor::zeros(&[8]));
            let ln_q = tape
                .layer_norm(qv, gamma, beta, LAYER_NORM_EPS)
                .map_err(|e| e.to_string())?;
            let diff = tape.value(out).max_abs_diff(tape.value(ln_q));
            ensure!(diff < 1e-5, "zeroed MHA_enc vs LN(Q): max diff {diff:.3e} >= 1e-5");
        }

        // (b) SAG layer with zeroed self-attention output projection equals
        // MHA_enc(LN_self(Q), K, V) exactly.
        {
            let mut store = ParamStore::new();
            let layer = SagMhaEncLayer::new(&mut store, &mut rng, "sag", 2, 8, 0.0, true)
                .map_err(|e| e.to_string())?;
            for id in [layer.self_mha.proj_o.w, layer.self_mha.proj_o.b] {
                store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[4, 8], &mut rng);
            let mask = [true, false, true, true];

            let mut tape = Tape::new();
            let mut drng = RngState::new(0);
            let qv = tape.constant(q.clone());
            let kv = tape.constant(k.clone());
            let full = layer
                .forward(&mut tape, &store, qv, kv, kv, Some(&mask), Mode::Eval, &mut drng)
                .map_err(|e| e.to_string())?;

            let mut tape2 = Tape::new();
            let mut drng2 = RngState::new(0);
            let qv2 = tape2.constant(q);
            let kv2 = tape2.constant(k);
            let q_prime = layer
                .ln_self
                .forward(&mut tape2, &store, qv2)
                .map_err(|e| e.to_string())?;
            let manual = layer
                .inner
                .forward(&mut tape2, &store, q_prime, kv2, kv2, Some(&mask), Mode::Eval, &mut drng2)
                .map_err(|e| e.to_string())?;
            ensure!(
                tape.value(full).data() == tape2.value(manual).data(),
                "zeroed SAG layer does not reduce to MHA_enc(LN_self(Q),K,V) bitwise"
            );
        }

        // (c) A one-layer CM_enc block equals its single layer bitwise.
        for variant in [EncoderVariant::MhaEnc, EncoderVariant::SagMhaEnc] {
            let mut store = ParamStore::new();
            let block = CmEncBlock::new(&mut store, &mut rng, "blk", variant, 1, 2, 8, 0.0, true)
                .map_err(|e| e.to_string())?;
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[4, 8], &mut rng);

            let mut tape = Tape::new();
            let mut drng = RngState::new(0);
            let qv = tape.constant(q.clone());
            let kv = tape.constant(k.clone());
            let via_block = block
                .forward(&mut tape, &store, qv, kv, kv, None, Mode::Eval, &mut drng)
                .map_err(|e| e.to_string())?;

            let mut tape2 = Tape::new();
            let mut drng2 = RngState::new(0);
            let qv2 = tape2.constant(q);
            let kv2 = tape2.constant(k);
            let via_layer = match &block.layers[0] {
                EncLayer::Mha(l) => l
                    .forward(&mut tape2, &store, qv2, kv2, kv2, None, Mode::Eval, &mut drng2),
                EncLayer::Sag(l) => l
                    .forward(&mut tape2, &store, qv2, kv2, kv2, None, Mode::Eval, &mut drng2),
            }
            .map_err(|e| e.to_string())?;
            ensure!(
                tape.value(via_block).data() == tape2.value(via_layer).data(),
                "L=1 {} block differs from its single layer",
                variant.as_str()
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------- 3 ----

#[test]
fn criterion_03_fixed_kv_per_layer() {
    criterion(3, "fixed K/V across the stack", || {
        for variant in [EncoderVariant::MhaEnc, EncoderVariant::SagMhaEnc] {
            let mut rng = RngState::new(37);
            let mut store = ParamStore::new();
            let block = CmEncBlock::new(&mut store, &mut rng, "blk", variant, 4, 2, 8, 0.0, true)
                .map_err(|e| e.to_string())?;
            let q = rand_tensor(&[3, 8], &mut rng);
            let k = rand_tensor(&[5, 8], &mut rng);
            let v = rand_tensor(&[5, 8], &mut rng);
            let mut tape = Tape::new();
            let mut drng = RngState::new(0);
            let qv = tape.constant(q);
            let kv = tape.constant(k.clone());
            let vv = tape.constant(v.clone());
            let mut trace = Vec::new();
            block
                .forward_traced(
                    &mut tape, &store, qv, kv, vv, None, Mode::Eval, &mut drng,
                    Some(&mut trace),
                )
                .map_err(|e| e.to_string())?;
            ensure!(
                trace.len() == 4,
                "{}: expected 4 traced layers, got {}",
                variant.as_str(),
                trace.len()
            );
            for (i, (kt, vt)) in trace.iter().enumerate() {
                ensure!(
                    kt.data() == k.data() && vt.data() == v.data(),
                    "{}: layer {i} saw different K/V contents",
                    variant.as_str()
                );
            }
        }
        Ok(())
    });
}

// ---------------------------------------------------------------- 4 ----

/// Brute-force AP oracle: sweep a decision threshold through every
/// distinct score and integrate precision over recall steps.
fn oracle_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return None;
    }
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let mut tp = 0usize;
        let mut pp = 0usize;
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                pp += 1;
                if l {
                    tp += 1;
                }
            }
        }
        let precision = tp as f64 / pp as f64;
        let recall = tp as f64 / total_pos as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

#[test]
fn criterion_04_map_oracle() {
    criterion(4, "mAP oracle", || {
        // The worked example first.
        let ap = average_precision(&[0.9, 0.8, 0.1], &[true, false, true])
            .map_err(|e| e.to_string())?
            .ok_or("worked example has positives but AP is undefined")?;
        ensure!(
            (ap - 5.0 / 6.0).abs() < 1e-12,
            "worked example AP {ap} != 5/6"
        );

        let mut rng = RngState::new(41);
        for case in 0..200 {
            let n = 1 + rng.next_below(64) as usize;
            let c = 1 + rng.next_below(8) as usize;
            let scores: Vec<Vec<f64>> =
                (0..n).map(|_| (0..c).map(|_| rng.next_f64()).collect()).collect();
            let labels: Vec<Vec<bool>> = (0..n)
                .map(|_| (0..c).map(|_| rng.next_f64() < 0.3).collect())
                .collect();
            let (map, per_class) = mean_ap(&scores, &labels).map_err(|e| e.to_string())?;

            let mut oracle_sum = 0.0;
            let mut oracle_n = 0usize;
            for cls in 0..c {
                let col_s: Vec<f64> = scores.iter().map(|r| r[cls]).collect();
                let col_l: Vec<bool> = labels.iter().map(|r| r[cls]).collect();
                let o = oracle_ap(&col_s, &col_l);
                match (o, per_class[cls]) {
                    (None, None) => {}
                    (Some(ov), Some(av)) => {
                        ensure!(
                            (ov - av).abs() < 1e-9,
                            "case {case} class {cls}: oracle {ov} vs implementation {av}"
                        );
                        oracle_sum += ov;
                        oracle_n += 1;
                    }
                    _ => return Err(format!("case {case} class {cls}: definedness mismatch")),
                }
            }
            let oracle_map = if oracle_n == 0 { 0.0 } else { oracle_sum / oracle_n as f64 };
            ensure!(
                (oracle_map - map).abs() < 1e-9,
                "case {case}: oracle mAP {oracle_map} vs implementation {map}"
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------- 5 ----

#[test]
fn criterion_05_loss_values() {
    criterion(5, "loss reference values", || {
        // Uniform 7-class cross entropy.
        let logits = Tensor::vector(vec![0.3; 7]);
        let ce = caer_loss(&logits, 4).map_err(|e| e.to_string())?;
        ensure!(
            (ce - (7.0f64).ln()).abs() < 1e-6,
            "uniform 7-class CE {ce} != ln 7"
        );

        // BCE at probability one half.
        let logits = Tensor::vector(vec![0.0; 5]);
        let cont = Tensor::vector(vec![0.5, 0.5, 0.5]);
        let bce = emotic_loss(&logits, &cont, &[1.0, 0.0, 1.0, 0.0, 1.0], &[0.5, 0.5, 0.5], 1.0, 0.0)
            .map_err(|e| e.to_string())?;
        ensure!((bce - (2.0f64).ln()).abs() < 1e-6, "BCE at p=0.5 {bce} != ln 2");

        // Joint loss is linear in (lambda1, lambda2).
        let mut rng = RngState::new(51);
        let logits = rand_tensor(&[26], &mut rng);
        let cont = rand_tensor(&[3], &mut rng);
        let y_disc: Vec<f64> = (0..26).map(|_| (rng.next_f64() < 0.4) as u8 as f64).collect();
        let y_cont = vec![0.3, 0.6, 0.2];
        let a = emotic_loss(&logits, &cont, &y_disc, &y_cont, 1.0, 0.0)
            .map_err(|e| e.to_string())?;
        let b = emotic_loss(&logits, &cont, &y_disc, &y_cont, 0.0, 1.0)
            .map_err(|e| e.to_string())?;
        for (l1, l2) in [(0.8, 0.2), (0.5, 0.5), (1.7, 0.3)] {
            let joint = emotic_loss(&logits, &cont, &y_disc, &y_cont, l1, l2)
                .map_err(|e| e.to_string())?;
            ensure!(
                (joint - (l1 * a + l2 * b)).abs() < 1e-6,
                "joint loss at ({l1},{l2}) is {joint}, expected {}",
                l1 * a + l2 * b
            );
        }
        Ok(())
    });
}

// ---------------------------------------------------------------- 6 ----

#[test]
fn criterion_06_overfit_linear_bundle() {
    criterion(6, "overfit 64-sample linear bundle", || {
        let started = Instant::now();
        let bundle = gen_synthetic(&SyntheticSpec::new(SynthMode::Linear, 64, 11, Geometry::toy()))
            .map_err(|e| e.to_string())?;
        let train = prepare(&bundle).map_err(|e| e.to_string())?;
        let cfg = McfConfig {
            variant: EncoderVariant::MhaEnc,
            layers: 2,
            heads: 2,
            d_model: 16,
            task: Task::MultilabelCont,
            n_disc: 26,
            dropout_p: 0.0,
            streams: Streams::Both,
            head_hidden: Some(64),
            geometry: Geometry::toy(),
            freeze_pe_adapter: false,
        };
        let mut model = McfModel::new(cfg, 3).map_err(|e| e.to_string())?;
        let tc = TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr0: 3e-3,
            gamma: 1.0,
            batch_size: 8,
            epochs: 30,
            lambda1: 0.5,
            lambda2: 0.5,
            seed: 1,
            hyper: OptimizerHyper::default(),
        };
        let mut epochs_used = 0;
        let mut last = (0.0, f64::INFINITY);
        while epochs_used < 300 {
            fit(&mut model, &train, &train, &tc).map_err(|e| e.to_string())?;
            epochs_used += tc.epochs;
            let rep = evaluate(&model, &train).map_err(|e| e.to_string())?;
            let avd = rep.avd_mse.unwrap();
            let avd_mean = (avd[0] + avd[1] + avd[2]) / 3.0;
            last = (rep.map.unwrap(), avd_mean);
            if last.0 >= 0.99 && last.1 <= 1e-3 {
                break;
            }
        }
        ensure!(
            last.0 >= 0.99 && last.1 <= 1e-3,
            "after {epochs_used} epochs: train mAP {:.4} (need >= 0.99), AVD MSE {:.2e} (need <= 1e-3)",
            last.0,
            last.1
        );
        let elapsed = started.elapsed();
        ensure!(
            elapsed.as_secs() < 300,
            "overfit run took {elapsed:?}, over the 5 min budget"
        );
        println!(
            "  overfit reached mAP {:.4}, AVD MSE {:.2e} in {epochs_used} epochs ({elapsed:?})",
            last.0, last.1
        );
        Ok(())
    });
}

// ---------------------------------------------------------------- 7 ----

#[test]
fn criterion_07_fusion_beats_single_stream() {
    criterion(7, "fusion beats single streams", || {
        let started = Instant::now();
        // Longer context streams than the gradient-check toy geometry so
        // the planted signal survives uniform pooling.
        let geometry = Geometry { t_pe: 8, d_pe: 16, t_fg: 32, d_fg: 16, t_vs: 32, d_vs: 16 };
        let spec = SyntheticSpec::new(SynthMode::Xor, 2000, 7, geometry);
        assert_eq!(spec.signal_strength, 2.0);
        assert_eq!(spec.noise_sigma, 1.0);
        let bundle = gen_synthetic(&spec).map_err(|e| e.to_string())?;
        let parts = split_dataset(&bundle, &[0.8, 0.2], 7).map_err(|e| e.to_string())?;
        let train = prepare(&parts[0]).map_err(|e| e.to_string())?;
        let val = prepare(&parts[1]).map_err(|e| e.to_string())?;

        let run = |streams: Streams, seed: u64| -> Result<f64, String> {
            let cfg = McfConfig {
                variant: EncoderVariant::MhaEnc,
                layers: 2,
                heads: 2,
                d_model: 16,
                task: Task::SingleLabel,
                n_disc: 2,
                dropout_p: 0.1,
                streams,
                head_hidden: Some(32),
                geometry,
                freeze_pe_adapter: false,
            };
            let mut model = McfModel::new(cfg, seed).map_err(|e| e.to_string())?;
            let tc = TrainConfig {
                optimizer: OptimizerKind::Adam,
                lr0: 3e-3,
                gamma: 0.9,
                batch_size: 32,
                epochs: 15,
                lambda1: 1.0,
                lambda2: 0.0,
                seed,
                hyper: OptimizerHyper::default(),
            };
            fit(&mut model, &train, &val, &tc).map_err(|e| e.to_string())?;
            Ok(evaluate(&model, &val).map_err(|e| e.to_string())?.accuracy.unwrap())
        };

        let seeds = [0u64, 1, 2, 3, 4];
        let mut acc = std::collections::BTreeMap::new();
        for streams in [Streams::Both, Streams::FgOnly, Streams::VsOnly] {
            let mut values = Vec::new();
            for &seed in &seeds {
                values.push(run(streams, seed)?);
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            println!(
                "  {:?}: accuracy {} over seeds {:?}",
                streams,
                format_mean_std(&values.iter().map(|v| 100.0 * v).collect::<Vec<_>>(), 2, 3),
                values
            );
            acc.insert(format!("{streams:?}"), mean);
        }
        let full = acc["Both"];
        let fg = acc["FgOnly"];
        let vs = acc["VsOnly"];
        ensure!(full >= 0.95, "full-model mean accuracy {full:.4} < 0.95");
        ensure!(fg <= 0.65, "FG-only mean accuracy {fg:.4} > 0.65");
        ensure!(vs <= 0.65, "VS-only mean accuracy {vs:.4} > 0.65");
        let elapsed = started.elapsed();
        ensure!(
            elapsed.as_secs() < 600,
            "fusion comparison took {elapsed:?}, over the 10 min budget"
        );
        println!("  fusion comparison completed in {elapsed:?}");
        Ok(())
    });
}

// ---------------------------------------------------------------- 8 ----

#[test]
fn criterion_08_determinism_and_reporting() {
    criterion(8, "determinism and mean (std) reporting", || {
        let bundle = gen_synthetic(&SyntheticSpec::new(SynthMode::Xor, 48, 9, Geometry::toy()))
            .map_err(|e| e.to_string())?;
        let data = prepare(&bundle).map_err(|e| e.to_string())?;
        let (train, val) = data.split_at(32);

        let run = |seed: u64| -> Result<(String, f64), String> {
            let cfg = McfConfig {
                variant: EncoderVariant::SagMhaEnc,
                layers: 1,
                heads: 2,
                d_model: 16,
                task: Task::SingleLabel,
                n_disc: 2,
                dropout_p: 0.1,
                streams: Streams::Both,
                head_hidden: Some(16),
                geometry: Geometry::toy(),
                freeze_pe_adapter: false,
            };
            let mut model = McfModel::new(cfg, seed).map_err(|e| e.to_string())?;
            let tc = TrainConfig {
                optimizer: OptimizerKind::Adam,
                lr0: 1e-3,
                gamma: 0.95,
                batch_size: 8,
                epochs: 3,
                lambda1: 1.0,
                lambda2: 0.0,
                seed,
                hyper: OptimizerHyper::default(),
            };
            let hist = fit(&mut model, train, val, &tc).map_err(|e| e.to_string())?;
            let acc = evaluate(&model, val).map_err(|e| e.to_string())?.accuracy.unwrap();
            Ok((hist.to_text(), acc))
        };

        // Identical seeds give byte-identical history files.
        let (h1, _) = run(5)?;
        let (h2, _) = run(5)?;
        ensure!(
            h1.as_bytes() == h2.as_bytes(),
            "identical seeds produced different training histories"
        );

        // Five-seed summary in the "mean (std)" format.
        let mut accs = Vec::new();
        for seed in 0..5 {
            accs.push(100.0 * run(seed)?.1);
        }
        let summary = format_mean_std(&accs, 2, 3);
        let valid = {
            let parts: Vec<&str> = summary.splitn(2, ' ').collect();
            parts.len() == 2
                && parts[0].parse::<f64>().is_ok()
                && parts[1].starts_with('(')
                && parts[1].ends_with(')')
                && parts[1][1..parts[1].len() - 1].parse::<f64>().is_ok()
        };
        ensure!(valid, "summary '{summary}' is not in 'mean (std)' format");
        println!("  5-seed accuracy summary: {summary}");
        Ok(())
    });
}

// ---------------------------------------------------------------- 9 ----

#[test]
fn criterion_09_bundle_format() {
    criterion(9, "bundle format round-trips and corruption", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut rng = RngState::new(91);
        for case in 0..100 {
            let mode = if rng.next_f64() < 0.5 { SynthMode::Xor } else { SynthMode::Linear };
            let n = 1 + rng.next_below(16) as usize;
            let bundle = gen_synthetic(&SyntheticSpec::new(mode, n, rng.next_u64(), Geometry::toy()))
                .map_err(|e| e.to_string())?;
            let p1 = dir.path().join(format!("a{case}.mcfb"));
            let p2 = dir.path().join(format!("b{case}.mcfb"));
            write_bundle(&p1, &bundle).map_err(|e| e.to_string())?;
            let back = read_bundle(&p1).map_err(|e| e.to_string())?;
            write_bundle(&p2, &back).map_err(|e| e.to_string())?;
            let b1 = std::fs::read(&p1).map_err(|e| e.to_string())?;
            let b2 = std::fs::read(&p2).map_err(|e| e.to_string())?;
            ensure!(b1 == b2, "round trip {case} not bitwise identical");
        }

        // Truncation.
        let bundle = gen_synthetic(&SyntheticSpec::new(SynthMode::Xor, 4, 2, Geometry::toy()))
            .map_err(|e| e.to_string())?;
        let path = dir.path().join("t.mcfb");
        write_bundle(&path, &bundle).map_err(|e| e.to_string())?;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        std::fs::write(&path, &bytes[..bytes.len() - 3]).map_err(|e| e.to_string())?;
        match read_bundle(&path) {
            Err(e @ McfError::Truncated(_)) => {
                ensure!(e.exit_code() == 3, "truncation exit code {} != 3", e.exit_code())
            }
            other => return Err(format!("truncated file gave {other:?}")),
        }

        // Magic corruption.
        let mut corrupt = bytes;
        corrupt[0] ^= 0xFF;
        std::fs::write(&path, &corrupt).map_err(|e| e.to_string())?;
        match read_bundle(&path) {
            Err(e @ McfError::BadMagic(_)) => {
                ensure!(e.exit_code() == 3, "bad-magic exit code {} != 3", e.exit_code())
            }
            other => return Err(format!("corrupt magic gave {other:?}")),
        }
        Ok(())
    });
}

// --------------------------------------------------------------- 10 ----

#[test]
fn criterion_10_paper_preset_construction() {
    criterion(10, "paper preset construction", || {
        // MHA_enc preset: L=4, h=8, d=512, fusion width 1024, 26+3 heads.
        let cfg = McfConfig::emotic_mha();
        ensure!(cfg.variant == EncoderVariant::MhaEnc, "wrong variant");
        ensure!(cfg.layers == 4 && cfg.heads == 8 && cfg.d_model == 512, "wrong L/h/d");
        ensure!(cfg.fusion_width() == 1024, "fusion width {} != 1024", cfg.fusion_width());
        let model = McfModel::new(cfg, 0).map_err(|e| e.to_string())?;
        for block in [model.fg_block.as_ref(), model.vs_block.as_ref()] {
            let block = block.ok_or("missing stream block")?;
            ensure!(block.layers.len() == 4, "block does not have 4 layers");
            for l in &block.layers {
                ensure!(matches!(l, EncLayer::Mha(_)), "non-MHA_enc layer in MHA preset");
            }
        }
        let disc_w = model.store.get(model.head_disc.out.w).value.shape().to_vec();
        ensure!(disc_w == [1024, 26], "discrete head weight shape {disc_w:?} != [1024, 26]");
        let cont = model.head_cont.as_ref().ok_or("missing continuous head")?;
        let cont_w = model.store.get(cont.out.w).value.shape().to_vec();
        ensure!(cont_w == [1024, 3], "continuous head weight shape {cont_w:?} != [1024, 3]");
        ensure!(
            !model.store.get(model.adapter_pe.w).trainable,
            "person adapter should be frozen in the MHA preset"
        );
        let n = model.store.total_elements();
        ensure!(n == 17_902_109, "MHA preset has {n} parameters, expected 17902109");

        // SAG preset: L=3, h=8, d=768, fusion width 1536, 7-class head.
        let cfg = McfConfig::caer_sag();
        ensure!(cfg.variant == EncoderVariant::SagMhaEnc, "wrong variant");
        ensure!(cfg.layers == 3 && cfg.heads == 8 && cfg.d_model == 768, "wrong L/h/d");
        ensure!(cfg.fusion_width() == 1536, "fusion width {} != 1536", cfg.fusion_width());
        let model = McfModel::new(cfg, 0).map_err(|e| e.to_string())?;
        for block in [model.fg_block.as_ref(), model.vs_block.as_ref()] {
            let block = block.ok_or("missing stream block")?;
            ensure!(block.layers.len() == 3, "block does not have 3 layers");
            for l in &block.layers {
                ensure!(matches!(l, EncLayer::Sag(_)), "non-SAG layer in SAG preset");
            }
        }
        let disc_w = model.store.get(model.head_disc.out.w).value.shape().to_vec();
        ensure!(disc_w == [1536, 7], "discrete head weight shape {disc_w:?} != [1536, 7]");
        ensure!(model.head_cont.is_none(), "single-label preset grew a continuous head");
        let n = model.store.total_elements();
        ensure!(n == 44_131_591, "SAG preset has {n} parameters, expected 44131591");
        Ok(())
    });
}
