//! Python bindings: feature bundles, synthetic generation, model
//! construction/checkpointing, training, evaluation, prediction, and the
//! gradient-check suites.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mcf_core::autograd::{sigmoid, Mode};
use mcf_core::checkpoint;
use mcf_core::config::RunConfig;
use mcf_core::data::{self, Label, SynthMode, SyntheticSpec};
use mcf_core::encoder::EncoderVariant;
use mcf_core::error::McfError;
use mcf_core::eval::{argmax, evaluate, prepare};
use mcf_core::gradcheck::{suite, GradCheckOptions};
use mcf_core::model::{Geometry, McfModel, Task};
use mcf_core::rng::RngState;
use mcf_core::train::fit;

fn to_pyerr(e: McfError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        3 => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_geometry(name: &str) -> PyResult<Geometry> {
    match name {
        "paper" => Ok(Geometry::paper()),
        "toy" => Ok(Geometry::toy()),
        other => Err(PyValueError::new_err(format!(
            "unknown geometry '{other}' (expected 'paper' or 'toy')"
        ))),
    }
}

fn geometry_dict<'py>(py: Python<'py>, g: &Geometry) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t_pe", g.t_pe)?;
    d.set_item("d_pe", g.d_pe)?;
    d.set_item("t_fg", g.t_fg)?;
    d.set_item("d_fg", g.d_fg)?;
    d.set_item("t_vs", g.t_vs)?;
    d.set_item("d_vs", g.d_vs)?;
    Ok(d)
}

/// Apply a Python dict of config overrides in insertion order.
fn apply_overrides(rc: &mut RunConfig, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<()> {
    if let Some(d) = overrides {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let value = v.str()?.to_string();
            rc.apply_kv(&key, &value).map_err(to_pyerr)?;
        }
    }
    Ok(())
}

/// An in-memory feature-bundle dataset.
#[pyclass]
struct Bundle {
    inner: data::Bundle,
}

#[pymethods]
impl Bundle {
    /// Read a bundle file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Bundle> {
        Ok(Bundle { inner: data::read_bundle(&path).map_err(to_pyerr)? })
    }

    /// Write the bundle; returns the number of bytes written.
    fn save(&self, path: PathBuf) -> PyResult<u64> {
        data::write_bundle(&path, &self.inner).map_err(to_pyerr)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn task(&self) -> &'static str {
        self.inner.header.task.as_str()
    }

    #[getter]
    fn n_disc(&self) -> u16 {
        self.inner.header.n_disc
    }

    #[getter]
    fn geometry<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        geometry_dict(py, &self.inner.header.geometry)
    }

    /// Label of sample `i`: an int class for single-label bundles, or a
    /// dict with binary 'disc' and 3-vector 'cont' for multilabel bundles.
    fn label<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Py<PyAny>> {
        let sample = self
            .inner
            .samples
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("sample index {i} out of range")))?;
        match &sample.label {
            Label::Single(c) => Ok((*c).into_pyobject(py)?.into_any().unbind()),
            Label::Multi { y_disc, y_cont } => {
                let d = PyDict::new(py);
                d.set_item("disc", y_disc.clone())?;
                d.set_item("cont", y_cont.to_vec())?;
                Ok(d.into_any().unbind())
            }
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Bundle(task='{}', n_disc={}, samples={})",
            self.inner.header.task.as_str(),
            self.inner.header.n_disc,
            self.inner.len()
        )
    }
}

/// Generate a synthetic bundle ('xor' or 'linear' mode).
#[pyfunction]
#[pyo3(signature = (mode, n, seed=0, geometry="paper", signal_strength=None, noise_sigma=None, n_disc=None))]
fn gen_synthetic(
    mode: &str,
    n: usize,
    seed: u64,
    geometry: &str,
    signal_strength: Option<f64>,
    noise_sigma: Option<f64>,
    n_disc: Option<u16>,
) -> PyResult<Bundle> {
    let mode = match mode {
        "xor" => SynthMode::Xor,
        "linear" => SynthMode::Linear,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown mode '{other}' (expected 'xor' or 'linear')"
            )))
        }
    };
    let mut spec = SyntheticSpec::new(mode, n, seed, parse_geometry(geometry)?);
    if let Some(s) = signal_strength {
        spec.signal_strength = s;
    }
    if let Some(s) = noise_sigma {
        spec.noise_sigma = s;
    }
    if let Some(k) = n_disc {
        spec.n_disc = k;
    }
    Ok(Bundle { inner: data::gen_synthetic(&spec).map_err(to_pyerr)? })
}

/// The dual-stream fusion model.
#[pyclass]
struct Model {
    inner: McfModel,
}

#[pymethods]
impl Model {
    /// Build a fresh model from a preset name (default toy) plus optional
    /// config-key overrides, initialized from `seed`.
    #[new]
    #[pyo3(signature = (preset=None, overrides=None, seed=None))]
    fn new(
        preset: Option<&str>,
        overrides: Option<&Bound<'_, PyDict>>,
        seed: Option<u64>,
    ) -> PyResult<Model> {
        let mut rc = match preset {
            Some(p) => RunConfig::preset(p).map_err(to_pyerr)?,
            None => RunConfig::default_toy(),
        };
        apply_overrides(&mut rc, overrides)?;
        rc.validate().map_err(to_pyerr)?;
        let seed = seed.unwrap_or(rc.train.seed);
        Ok(Model { inner: McfModel::new(rc.model, seed).map_err(to_pyerr)? })
    }

    /// Load a checkpoint written by `save` (or the CLI).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        Ok(Model { inner: checkpoint::load(&path).map_err(to_pyerr)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.inner, &path).map_err(to_pyerr)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.store.total_elements()
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = &self.inner.config;
        let d = PyDict::new(py);
        d.set_item("variant", c.variant.as_str())?;
        d.set_item("layers", c.layers)?;
        d.set_item("heads", c.heads)?;
        d.set_item("d_model", c.d_model)?;
        d.set_item("task", c.task.as_str())?;
        d.set_item("n_disc", c.n_disc)?;
        d.set_item("streams", c.streams.as_str())?;
        d.set_item("dropout", c.dropout_p)?;
        d.set_item("geometry", geometry_dict(py, &c.geometry)?)?;
        Ok(d)
    }

    /// Train in place on `bundle`. Training hyperparameters come from the
    /// toy defaults plus `overrides` (e.g. {'epochs': 10, 'lr0': 1e-3}).
    /// Validates on `val` when given, otherwise on the training bundle.
    /// Returns the per-epoch history as text.
    #[pyo3(signature = (bundle, val=None, overrides=None))]
    fn fit(
        &mut self,
        bundle: &Bundle,
        val: Option<&Bundle>,
        overrides: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<String> {
        let mut rc = RunConfig::default_toy();
        rc.model = self.inner.config.clone();
        apply_overrides(&mut rc, overrides)?;
        let train_set = prepare(&bundle.inner).map_err(to_pyerr)?;
        let val_set = match val {
            Some(v) => prepare(&v.inner).map_err(to_pyerr)?,
            None => train_set.clone(),
        };
        let history = fit(&mut self.inner, &train_set, &val_set, &rc.train).map_err(to_pyerr)?;
        Ok(history.to_text())
    }

    /// Metrics of this model on `bundle` as a dict.
    fn evaluate<'py>(&self, py: Python<'py>, bundle: &Bundle) -> PyResult<Bound<'py, PyDict>> {
        let samples = prepare(&bundle.inner).map_err(to_pyerr)?;
        let report = evaluate(&self.inner, &samples).map_err(to_pyerr)?;
        let d = PyDict::new(py);
        d.set_item("n_samples", report.n_samples)?;
        d.set_item("map", report.map)?;
        d.set_item("accuracy", report.accuracy)?;
        d.set_item("macro_f1", report.macro_f1)?;
        d.set_item("avd_mse", report.avd_mse.map(|a| a.to_vec()))?;
        d.set_item("text", report.to_text())?;
        Ok(d)
    }

    /// Per-sample predictions on `bundle`: dicts with 'scores' and 'cont'
    /// for multilabel models, or 'class' and 'logits' for single-label.
    #[pyo3(signature = (bundle, limit=None))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        bundle: &Bundle,
        limit: Option<usize>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let n = limit.unwrap_or(bundle.inner.len()).min(bundle.inner.len());
        let mut rng = RngState::new(0);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let sample = bundle.inner.stream_sample(i).map_err(to_pyerr)?;
            let pred = self.inner.forward(&sample, Mode::Eval, &mut rng).map_err(to_pyerr)?;
            let d = PyDict::new(py);
            match self.inner.config.task {
                Task::MultilabelCont => {
                    let scores: Vec<f64> =
                        pred.disc_logits.data().iter().map(|&z| sigmoid(z)).collect();
                    d.set_item("scores", scores)?;
                    let cont = pred.cont.expect("multilabel model emits continuous outputs");
                    d.set_item("cont", cont.data().to_vec())?;
                }
                Task::SingleLabel => {
                    d.set_item("class", argmax(pred.disc_logits.data()))?;
                    d.set_item("logits", pred.disc_logits.data().to_vec())?;
                }
            }
            out.push(d);
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.config;
        format!(
            "Model(variant='{}', layers={}, d_model={}, params={})",
            c.variant.as_str(),
            c.layers,
            c.d_model,
            self.inner.store.total_elements()
        )
    }
}

/// Run the finite-difference gradient suites at toy geometry. Returns a
/// dict of check name -> max relative error. `break_gradient` corrupts
/// the analytic gradients by 1% so callers can verify detection.
#[pyfunction]
#[pyo3(signature = (variant=None, break_gradient=false, max_elements=6))]
fn grad_check<'py>(
    py: Python<'py>,
    variant: Option<&str>,
    break_gradient: bool,
    max_elements: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let variants = match variant {
        Some(v) => vec![EncoderVariant::parse(v).map_err(to_pyerr)?],
        None => vec![EncoderVariant::MhaEnc, EncoderVariant::SagMhaEnc],
    };
    let corrupt = if break_gradient { 1.01 } else { 1.0 };
    let d = PyDict::new(py);
    let prim_opts = GradCheckOptions { corrupt_factor: corrupt, ..GradCheckOptions::default() };
    for (name, report) in suite::primitives(&prim_opts).map_err(to_pyerr)? {
        d.set_item(name, report.max_rel_err)?;
    }
    for v in variants {
        let opts = GradCheckOptions {
            max_elements_per_tensor: Some(max_elements),
            corrupt_factor: corrupt,
            ..suite::full_model_options()
        };
        let (name, report) = suite::full_model(v, &opts).map_err(to_pyerr)?;
        d.set_item(name, report.max_rel_err)?;
    }
    Ok(d)
}

#[pymodule]
fn mcf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Bundle>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    Ok(())
}
