//! `mcf`: generate synthetic feature bundles, train, evaluate,
//! gradient-check, and predict.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 check failure.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use mcf_core::autograd::{sigmoid, Mode};
use mcf_core::checkpoint;
use mcf_core::config::RunConfig;
use mcf_core::data::{
    gen_synthetic, read_bundle, split_dataset, write_bundle, Bundle, SynthMode, SyntheticSpec,
};
use mcf_core::encoder::EncoderVariant;
use mcf_core::error::{McfError, Result};
use mcf_core::eval::{argmax, evaluate, prepare};
use mcf_core::gradcheck::{suite, GradCheckOptions};
use mcf_core::metrics::format_mean_std;
use mcf_core::model::{Geometry, McfModel, Task};
use mcf_core::rng::RngState;
use mcf_core::train::fit;

#[derive(Parser)]
#[command(name = "mcf", version, about = "Dual-stream multimodal context fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature bundle.
    GenSynth(GenSynthArgs),
    /// Train a model from a preset/config and write checkpoint + history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a bundle and print the report.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suites at toy geometry.
    Gradcheck(GradcheckArgs),
    /// Print per-sample predictions of a checkpoint on a bundle.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Xor,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryArg {
    Paper,
    Toy,
}

#[derive(Args)]
struct GenSynthArgs {
    /// Label structure: xor (single-label) or linear (multilabel + AVD).
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Token geometry of the generated streams.
    #[arg(long, value_enum, default_value = "paper")]
    geometry: GeometryArg,
    #[arg(long)]
    signal_strength: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Number of discrete classes (defaults: 2 for xor, 26 for linear).
    #[arg(long)]
    n_disc: Option<u16>,
    /// Output bundle path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Named preset applied before the config file and overrides.
    #[arg(long)]
    preset: Option<String>,
    /// Plain-text key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual overrides, e.g. --set epochs=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Base seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Run this many consecutive seeds and report "mean (std)".
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Training bundle; overrides the config value.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Validation bundle; overrides the config value.
    #[arg(long)]
    val_bundle: Option<PathBuf>,
    /// Directory for outputs not given explicit paths in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the timestamp line from the report file.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// Also write the report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Encoder design for the full-model check; default runs both.
    #[arg(long)]
    variant: Option<String>,
    /// Corrupt analytic gradients by 1% to prove the checker detects it.
    #[arg(long)]
    break_gradient: bool,
    /// Elements checked per tensor in the full-model suite.
    #[arg(long, default_value_t = 6)]
    max_elements: usize,
    /// Relative-error threshold.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// Print at most this many samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Also write the predictions to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Predict(a) => cmd_predict(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    // Temp file plus rename so failed commands never leave partial output.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn cmd_gen_synth(a: GenSynthArgs) -> Result<()> {
    let mode = match a.mode {
        ModeArg::Xor => SynthMode::Xor,
        ModeArg::Linear => SynthMode::Linear,
    };
    let geometry = match a.geometry {
        GeometryArg::Paper => Geometry::paper(),
        GeometryArg::Toy => Geometry::toy(),
    };
    let mut spec = SyntheticSpec::new(mode, a.n, a.seed, geometry);
    if let Some(s) = a.signal_strength {
        spec.signal_strength = s;
    }
    if let Some(s) = a.noise_sigma {
        spec.noise_sigma = s;
    }
    if let Some(k) = a.n_disc {
        spec.n_disc = k;
    }
    if a.n == 0 {
        eprintln!("warning: generating an empty bundle (--n 0)");
    }
    let bundle = gen_synthetic(&spec)?;
    let bytes = write_bundle(&a.out, &bundle)?;
    println!(
        "wrote {} samples ({bytes} bytes) to {}",
        bundle.len(),
        a.out.display()
    );
    println!(
        "mode = {}  seed = {}  n_disc = {}  geometry = t_pe {} x d_pe {}, t_fg {} x d_fg {}, t_vs {} x d_vs {}",
        mode.as_str(),
        spec.seed,
        spec.n_disc,
        geometry.t_pe,
        geometry.d_pe,
        geometry.t_fg,
        geometry.d_fg,
        geometry.t_vs,
        geometry.d_vs,
    );
    Ok(())
}

fn resolve_run_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut rc = match &a.preset {
        Some(p) => RunConfig::preset(p)?,
        None => RunConfig::default_toy(),
    };
    if let Some(path) = &a.config {
        rc.apply_file(path)?;
    }
    for kv in &a.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            McfError::Config(format!("--set expects KEY=VALUE, got '{kv}'"))
        })?;
        rc.apply_kv(k.trim(), v.trim())?;
    }
    if let Some(seed) = a.seed {
        rc.train.seed = seed;
    }
    if let Some(p) = &a.bundle {
        rc.bundle = Some(p.clone());
    }
    if let Some(p) = &a.val_bundle {
        rc.val_bundle = Some(p.clone());
    }
    rc.validate()?;
    Ok(rc)
}

/// Split the training bundle into (train, val) per the config.
fn train_val(rc: &RunConfig) -> Result<(Bundle, Bundle)> {
    let path = rc
        .bundle
        .as_ref()
        .ok_or_else(|| McfError::Config("no training bundle given (key 'bundle')".into()))?;
    let bundle = read_bundle(path)?;
    if let Some(vp) = &rc.val_bundle {
        return Ok((bundle, read_bundle(vp)?));
    }
    if rc.val_fraction > 0.0 {
        let mut parts =
            split_dataset(&bundle, &[1.0 - rc.val_fraction, rc.val_fraction], rc.train.seed)?;
        let val = parts.pop().unwrap();
        let train = parts.pop().unwrap();
        return Ok((train, val));
    }
    // Validate on the training set itself (used by overfitting runs).
    Ok((bundle.clone(), bundle))
}

fn out_path(explicit: &Option<PathBuf>, dir: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    explicit
        .clone()
        .or_else(|| dir.as_ref().map(|d| d.join(name)))
}

fn timestamp_line(enabled: bool) -> String {
    if !enabled {
        return String::new();
    }
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# generated at unix time {now}\n")
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let rc = resolve_run_config(&a)?;
    if a.seeds == 0 {
        return Err(McfError::Config("--seeds must be >= 1".into()));
    }
    let (train_bundle, val_bundle) = train_val(&rc)?;
    let train_set = prepare(&train_bundle)?;
    let val_set = prepare(&val_bundle)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
    }

    let mut finals: Vec<(String, f64)> = Vec::new();
    let mut metric_name = "";
    for i in 0..a.seeds {
        let mut tc = rc.train.clone();
        tc.seed = rc.train.seed + i as u64;
        let mut model = McfModel::new(rc.model.clone(), tc.seed)?;
        let history = fit(&mut model, &train_set, &val_set, &tc)?;
        let report = evaluate(&model, &val_set)?;

        let suffix = if a.seeds == 1 { String::new() } else { format!("-seed{}", tc.seed) };
        if let Some(p) = out_path(&rc.history, &a.out, &format!("history{suffix}.txt")) {
            write_text(&p, &history.to_text())?;
            println!("history written to {}", p.display());
        }
        if let Some(p) = out_path(&rc.checkpoint, &a.out, &format!("model{suffix}.ckpt")) {
            checkpoint::save(&model, &p)?;
            println!("checkpoint written to {}", p.display());
        }
        if let Some(p) = out_path(&rc.report, &a.out, &format!("report{suffix}.txt")) {
            write_text(&p, &format!("{}{}", timestamp_line(!a.no_timestamp), report.to_text()))?;
        }
        let (name, value) = match rc.model.task {
            Task::MultilabelCont => ("map", report.map.unwrap_or(0.0)),
            Task::SingleLabel => ("accuracy", report.accuracy.unwrap_or(0.0)),
        };
        metric_name = name;
        println!("seed {} best_epoch {}:", tc.seed, history.best_epoch);
        print!("{}", report.to_text());
        finals.push((name.to_string(), value));
    }
    if a.seeds > 1 {
        let values: Vec<f64> = finals.iter().map(|(_, v)| 100.0 * v).collect();
        println!(
            "{metric_name} over {} seeds: {}",
            a.seeds,
            format_mean_std(&values, 2, 3)
        );
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = checkpoint::load(&a.checkpoint)?;
    let bundle = read_bundle(&a.bundle)?;
    let samples = prepare(&bundle)?;
    let report = evaluate(&model, &samples)?;
    print!("{}", report.to_text());
    if let Some(p) = &a.out {
        write_text(p, &report.to_text())?;
        println!("report written to {}", p.display());
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let variants = match &a.variant {
        Some(v) => vec![EncoderVariant::parse(v)?],
        None => vec![EncoderVariant::MhaEnc, EncoderVariant::SagMhaEnc],
    };
    let corrupt = if a.break_gradient { 1.01 } else { 1.0 };
    let mut reports = Vec::new();

    let prim_opts = GradCheckOptions { corrupt_factor: corrupt, ..GradCheckOptions::default() };
    reports.extend(suite::primitives(&prim_opts)?);
    for v in variants {
        let model_opts = GradCheckOptions {
            max_elements_per_tensor: Some(a.max_elements),
            corrupt_factor: corrupt,
            ..suite::full_model_options()
        };
        reports.push(suite::full_model(v, &model_opts)?);
    }

    let mut all_ok = true;
    for (name, report) in &reports {
        let ok = report.passed(a.tolerance);
        all_ok &= ok;
        println!(
            "{name}: max relative error {:.3e} -> {}",
            report.max_rel_err,
            if ok { "pass" } else { "FAIL" }
        );
        if !ok {
            for t in report.failing(a.tolerance) {
                println!("  {}: {:.3e} over {} elements", t.name, t.max_rel_err, t.checked_elements);
            }
        }
    }
    if !all_ok {
        return Err(McfError::CheckFailed(format!(
            "gradient check exceeded tolerance {:.0e}",
            a.tolerance
        )));
    }
    println!("all gradient checks passed at tolerance {:.0e}", a.tolerance);
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = checkpoint::load(&a.checkpoint)?;
    let bundle = read_bundle(&a.bundle)?;
    let n = a.limit.unwrap_or(bundle.len()).min(bundle.len());
    let mut rng = RngState::new(0);
    let mut out = String::new();
    for i in 0..n {
        let sample = bundle.stream_sample(i)?;
        let pred = model.forward(&sample, Mode::Eval, &mut rng)?;
        match model.config.task {
            Task::MultilabelCont => {
                let scores: Vec<String> = pred
                    .disc_logits
                    .data()
                    .iter()
                    .map(|&z| format!("{:.4}", sigmoid(z)))
                    .collect();
                let cont = pred.cont.expect("multilabel model emits continuous outputs");
                out.push_str(&format!(
                    "sample {i}: scores [{}] avd [{:.4} {:.4} {:.4}]\n",
                    scores.join(" "),
                    cont.data()[0],
                    cont.data()[1],
                    cont.data()[2]
                ));
            }
            Task::SingleLabel => {
                let class = argmax(pred.disc_logits.data());
                let logits: Vec<String> =
                    pred.disc_logits.data().iter().map(|&z| format!("{z:.4}")).collect();
                out.push_str(&format!("sample {i}: class {class} logits [{}]\n", logits.join(" ")));
            }
        }
    }
    print!("{out}");
    if let Some(p) = &a.out {
        write_text(p, &out)?;
        println!("predictions written to {}", p.display());
    }
    Ok(())
}
