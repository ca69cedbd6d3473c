//! Evaluation measures: average precision, mean AP, accuracy, macro-F1,
//! and per-dimension regression error.

use crate::error::{McfError, Result};

/// Average precision for one class.
///
/// Items are ranked by descending score with ties broken by ascending
/// original index; AP = sum over positive ranks of (R_k - R_{k-1}) * P_k.
/// Returns None when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(McfError::Dim(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(McfError::Dim("empty score list".into()));
    }
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort by descending score keeps ties in ascending index order.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
            let precision = tp as f64 / (rank + 1) as f64;
            let recall_step = 1.0 / total_pos as f64;
            ap += recall_step * precision;
        }
    }
    Ok(Some(ap))
}

/// Mean AP over classes with at least one positive; classes without
/// positives are excluded. Returns (map, per-class AP); all-empty labels
/// give 0.
pub fn mean_ap(
    scores: &[Vec<f64>],
    labels: &[Vec<bool>],
) -> Result<(f64, Vec<Option<f64>>)> {
    if scores.len() != labels.len() {
        return Err(McfError::Dim(format!(
            "{} score rows vs {} label rows",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n_classes = scores[0].len();
    for (s, l) in scores.iter().zip(labels) {
        if s.len() != n_classes || l.len() != n_classes {
            return Err(McfError::Dim("ragged score/label matrix".into()));
        }
    }
    let mut per_class = Vec::with_capacity(n_classes);
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..n_classes {
        let col_scores: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let col_labels: Vec<bool> = labels.iter().map(|r| r[c]).collect();
        let ap = average_precision(&col_scores, &col_labels)?;
        if let Some(v) = ap {
            sum += v;
            counted += 1;
        }
        per_class.push(ap);
    }
    if counted == 0 {
        return Ok((0.0, per_class));
    }
    Ok((sum / counted as f64, per_class))
}

/// Accuracy and macro-F1 over class-index predictions. Per-class F1 with
/// an empty denominator counts as 0.
pub fn classification_metrics(
    pred: &[usize],
    truth: &[usize],
    n_disc: usize,
) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(McfError::Dim(format!(
            "{} predictions vs {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(McfError::Dim("empty prediction list".into()));
    }
    for &p in pred.iter().chain(truth) {
        if p >= n_disc {
            return Err(McfError::Param(format!("class index {p} out of range 0..{n_disc}")));
        }
    }
    let n = pred.len();
    let mut correct = 0usize;
    let mut tp = vec![0usize; n_disc];
    let mut fp = vec![0usize; n_disc];
    let mut fnn = vec![0usize; n_disc];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            correct += 1;
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let mut f1_sum = 0.0;
    for c in 0..n_disc {
        let denom = 2 * tp[c] + fp[c] + fnn[c];
        if denom > 0 {
            f1_sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    Ok((correct as f64 / n as f64, f1_sum / n_disc as f64))
}

/// Per-dimension mean squared error over samples.
pub fn avd_error(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<[f64; 3]> {
    if pred.len() != truth.len() {
        return Err(McfError::Dim(format!(
            "{} predictions vs {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(McfError::Dim("empty prediction list".into()));
    }
    let mut out = [0.0; 3];
    for (p, t) in pred.iter().zip(truth) {
        for d in 0..3 {
            let e = p[d] - t[d];
            out[d] += e * e;
        }
    }
    out.iter_mut().for_each(|v| *v /= pred.len() as f64);
    Ok(out)
}

/// Per-task evaluation record.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub map: Option<f64>,
    pub per_class_ap: Vec<Option<f64>>,
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub avd_mse: Option<[f64; 3]>,
    pub positives_per_class: Vec<usize>,
    pub n_samples: usize,
}

impl EvalReport {
    /// Text serialization: key = value lines, 4-decimal scores.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n_samples = {}\n", self.n_samples));
        if let Some(m) = self.map {
            out.push_str(&format!("map = {m:.4}\n"));
            for (c, ap) in self.per_class_ap.iter().enumerate() {
                match ap {
                    Some(v) => out.push_str(&format!("ap_class_{c} = {v:.4}\n")),
                    None => out.push_str(&format!("ap_class_{c} = undefined\n")),
                }
            }
        }
        if let Some(a) = self.accuracy {
            out.push_str(&format!("accuracy = {a:.4}\n"));
        }
        if let Some(f) = self.macro_f1 {
            out.push_str(&format!("macro_f1 = {f:.4}\n"));
        }
        if let Some(m) = self.avd_mse {
            out.push_str(&format!("avd_mse = {:.6} {:.6} {:.6}\n", m[0], m[1], m[2]));
        }
        for (c, n) in self.positives_per_class.iter().enumerate() {
            out.push_str(&format!("positives_class_{c} = {n}\n"));
        }
        out
    }
}

/// "mean (std)" reporting format used for multi-seed runs.
pub fn format_mean_std(values: &[f64], mean_decimals: usize, std_decimals: usize) -> String {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    format!(
        "{:.md$} ({:.sd$})",
        mean,
        var.sqrt(),
        md = mean_decimals,
        sd = std_decimals
    )
}
