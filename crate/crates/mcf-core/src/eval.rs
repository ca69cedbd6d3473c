//! Model evaluation over labeled samples.

use crate::autograd::{sigmoid, Mode};
use crate::data::{Bundle, Label};
use crate::error::{McfError, Result};
use crate::metrics::{avd_error, classification_metrics, mean_ap, EvalReport};
use crate::model::{McfModel, StreamSample, Task};
use crate::rng::RngState;

/// A sample paired with its training target.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub features: StreamSample,
    pub target: Target,
}

#[derive(Debug, Clone)]
pub enum Target {
    Multi { y_disc: Vec<f64>, y_cont: Vec<f64> },
    Single(usize),
}

/// Widen a bundle into labeled in-memory samples.
pub fn prepare(bundle: &Bundle) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::with_capacity(bundle.len());
    for i in 0..bundle.len() {
        let features = bundle.stream_sample(i)?;
        let target = match &bundle.samples[i].label {
            Label::Multi { y_disc, y_cont } => Target::Multi {
                y_disc: y_disc.iter().map(|&b| b as f64).collect(),
                y_cont: y_cont.iter().map(|&v| v as f64).collect(),
            },
            Label::Single(c) => Target::Single(*c as usize),
        };
        out.push(LabeledSample { features, target });
    }
    Ok(out)
}

/// Evaluate in eval mode (deterministic) and compute the task's metrics.
pub fn evaluate(model: &McfModel, samples: &[LabeledSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(McfError::Eval("empty evaluation set".into()));
    }
    let mut rng = RngState::new(0);
    match model.config.task {
        Task::MultilabelCont => {
            let mut scores = Vec::with_capacity(samples.len());
            let mut labels = Vec::with_capacity(samples.len());
            let mut cont_pred = Vec::with_capacity(samples.len());
            let mut cont_truth = Vec::with_capacity(samples.len());
            for s in samples {
                let (y_disc, y_cont) = match &s.target {
                    Target::Multi { y_disc, y_cont } => (y_disc, y_cont),
                    Target::Single(_) => {
                        return Err(McfError::Eval(
                            "single-label target in a multilabel evaluation".into(),
                        ))
                    }
                };
                let out = model.forward(&s.features, Mode::Eval, &mut rng)?;
                scores.push(out.disc_logits.data().iter().map(|&z| sigmoid(z)).collect());
                labels.push(y_disc.iter().map(|&v| v != 0.0).collect());
                let c = out.cont.expect("multilabel model emits continuous outputs");
                cont_pred.push([c.data()[0], c.data()[1], c.data()[2]]);
                cont_truth.push([y_cont[0], y_cont[1], y_cont[2]]);
            }
            let (map, per_class_ap) = mean_ap(&scores, &labels)?;
            let positives = (0..per_class_ap.len())
                .map(|c| labels.iter().filter(|l| l[c]).count())
                .collect();
            Ok(EvalReport {
                map: Some(map),
                per_class_ap,
                accuracy: None,
                macro_f1: None,
                avd_mse: Some(avd_error(&cont_pred, &cont_truth)?),
                positives_per_class: positives,
                n_samples: samples.len(),
            })
        }
        Task::SingleLabel => {
            let n_disc = model.config.n_disc;
            let mut pred = Vec::with_capacity(samples.len());
            let mut truth = Vec::with_capacity(samples.len());
            for s in samples {
                let y = match &s.target {
                    Target::Single(y) => *y,
                    Target::Multi { .. } => {
                        return Err(McfError::Eval(
                            "multilabel target in a single-label evaluation".into(),
                        ))
                    }
                };
                let out = model.forward(&s.features, Mode::Eval, &mut rng)?;
                pred.push(argmax(out.disc_logits.data()));
                truth.push(y);
            }
            let (accuracy, macro_f1) = classification_metrics(&pred, &truth, n_disc)?;
            let mut counts = vec![0usize; n_disc];
            for &t in &truth {
                counts[t] += 1;
            }
            Ok(EvalReport {
                map: None,
                per_class_ap: Vec::new(),
                accuracy: Some(accuracy),
                macro_f1: Some(macro_f1),
                avd_mse: None,
                positives_per_class: counts,
                n_samples: samples.len(),
            })
        }
    }
}

/// Ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
    }
}
