//! Reverse-mode differentiation over a dynamic tape.
//!
//! Every forward pass records its operations on a [`Tape`]; calling
//! [`Tape::backward`] walks the tape in reverse and produces gradients for
//! every node, which can then be accumulated into a [`ParamStore`].
//! Nodes hold plain tensors, so a tape is independent of the parameter
//! store it was built from.

use crate::error::{McfError, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Forward-pass mode. Eval disables dropout and is fully deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

const MASK_LOGIT: f64 = -1e9;

enum Op {
    Leaf { param: Option<ParamId> },
    Add { a: usize, b: usize },
    AddScaled { a: usize, b: usize, ca: f64, cb: f64 },
    AddBias { x: usize, b: usize },
    Scale { x: usize, c: f64 },
    Matmul { a: usize, b: usize },
    Transpose { x: usize },
    Relu { x: usize },
    SoftmaxRows { x: usize },
    LayerNorm { x: usize, gamma: usize, beta: usize, xhat: Tensor, inv_std: Vec<f64> },
    MulMask { x: usize, mask: Vec<f64> },
    MeanRows { x: usize, keep: Vec<bool>, count: usize },
    ConcatCols { parts: Vec<usize> },
    SliceCols { x: usize, start: usize, len: usize },
    Reshape { x: usize },
    BceWithLogits { logits: usize, targets: Vec<f64>, probs: Vec<f64> },
    MseMean { pred: usize, target: Vec<f64> },
    CrossEntropyLogits { logits: usize, class: usize, probs: Vec<f64> },
    SumAll { x: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recording of one forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> VarId {
        self.nodes.push(Node { value, op });
        VarId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a constant (non-parameter) leaf.
    pub fn constant(&mut self, value: Tensor) -> VarId {
        self.push(value, Op::Leaf { param: None })
    }

    /// Insert a parameter leaf; its gradient flows back into the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> VarId {
        let value = store.get(id).value.clone();
        self.push(value, Op::Leaf { param: Some(id) })
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa != sb {
            return Err(McfError::Dim(format!("add: {:?} vs {:?}", sa, sb)));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn add_scaled(&mut self, a: VarId, b: VarId, ca: f64, cb: f64) -> Result<VarId> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa != sb {
            return Err(McfError::Dim(format!("add_scaled: {:?} vs {:?}", sa, sb)));
        }
        let mut out = Tensor::zeros(&sa);
        for ((o, x), y) in out
            .data_mut()
            .iter_mut()
            .zip(self.nodes[a.0].value.data())
            .zip(self.nodes[b.0].value.data())
        {
            *o = ca * x + cb * y;
        }
        Ok(self.push(out, Op::AddScaled { a: a.0, b: b.0, ca, cb }))
    }

    /// Broadcast-add a rank-1 bias over the rows of a rank-2 tensor.
    pub fn add_bias(&mut self, x: VarId, b: VarId) -> Result<VarId> {
        let xv = self.value(x);
        let bv = self.value(b);
        if bv.rank() != 1 || xv.cols() != bv.cols() {
            return Err(McfError::Dim(format!(
                "add_bias: x {:?} bias {:?}",
                xv.shape(),
                bv.shape()
            )));
        }
        let cols = xv.cols();
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for c in 0..cols {
                let v = out.at(r, c) + bv.data()[c];
                out.set(r, c, v);
            }
        }
        // Preserve rank-1 inputs.
        let out = if xv.rank() == 1 {
            out.reshape(&[cols])?
        } else {
            out
        };
        Ok(self.push(out, Op::AddBias { x: x.0, b: b.0 }))
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> VarId {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::Scale { x: x.0, c })
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::Matmul { a: a.0, b: b.0 }))
    }

    pub fn transpose(&mut self, x: VarId) -> VarId {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose { x: x.0 })
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu { x: x.0 })
    }

    /// Row-wise softmax with optional key mask. Masked positions get an
    /// additive -1e9 logit before normalization so their gradient vanishes
    /// smoothly. Stabilized by row-max subtraction.
    pub fn softmax_rows(&mut self, x: VarId, mask: Option<&[bool]>) -> Result<VarId> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(McfError::Dim(format!("softmax_rows: rank-{} input", xv.rank())));
        }
        let (t, n) = (xv.rows(), xv.cols());
        if let Some(m) = mask {
            if m.len() != n {
                return Err(McfError::Mask(format!("mask length {} vs {} columns", m.len(), n)));
            }
            if !m.iter().any(|&b| b) {
                return Err(McfError::Mask("all positions masked".into()));
            }
        }
        let mut out = Tensor::zeros(&[t, n]);
        for r in 0..t {
            let mut logits: Vec<f64> = (0..n).map(|c| xv.at(r, c)).collect();
            if let Some(m) = mask {
                for (l, &keep) in logits.iter_mut().zip(m) {
                    if !keep {
                        *l += MASK_LOGIT;
                    }
                }
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            let mut exps = vec![0.0; n];
            for (e, l) in exps.iter_mut().zip(&logits) {
                *e = (l - mx).exp();
                sum += *e;
            }
            for c in 0..n {
                out.set(r, c, exps[c] / sum);
            }
        }
        Ok(self.push(out, Op::SoftmaxRows { x: x.0 }))
    }

    /// Per-row standardization with population variance, then affine.
    pub fn layer_norm(&mut self, x: VarId, gamma: VarId, beta: VarId, eps: f64) -> Result<VarId> {
        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let d = xv.cols();
        if gv.numel() != d || bv.numel() != d {
            return Err(McfError::Dim(format!(
                "layer_norm: x {:?} gamma {:?} beta {:?}",
                xv.shape(),
                gv.shape(),
                bv.shape()
            )));
        }
        let t = xv.rows();
        let mut xhat = Tensor::zeros(&[t, d]);
        let mut inv_std = vec![0.0; t];
        let mut out = Tensor::zeros(&[t, d]);
        for r in 0..t {
            let row: Vec<f64> = (0..d).map(|c| xv.at(r, c)).collect();
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let xh = (row[c] - mean) * is;
                xhat.set(r, c, xh);
                out.set(r, c, gv.data()[c] * xh + bv.data()[c]);
            }
        }
        let out = if xv.rank() == 1 { out.reshape(&[d])? } else { out };
        Ok(self.push(
            out,
            Op::LayerNorm { x: x.0, gamma: gamma.0, beta: beta.0, xhat, inv_std },
        ))
    }

    /// Inverted dropout. Train mode zeroes each element with probability p
    /// and scales survivors by 1/(1-p); eval mode is the identity.
    pub fn dropout(&mut self, x: VarId, p: f64, mode: Mode, rng: &mut RngState) -> Result<VarId> {
        if !(0.0..1.0).contains(&p) {
            return Err(McfError::Param(format!("dropout probability {p} not in [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let n = self.value(x).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.next_f64() < p { 0.0 } else { scale })
            .collect();
        let mut out = self.value(x).clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        Ok(self.push(out, Op::MulMask { x: x.0, mask }))
    }

    /// Mean over unmasked rows; result is rank-1 of the column width.
    pub fn masked_mean_rows(&mut self, x: VarId, mask: Option<&[bool]>) -> Result<VarId> {
        let xv = self.value(x);
        let (t, d) = (xv.rows(), xv.cols());
        let keep: Vec<bool> = match mask {
            Some(m) => {
                if m.len() != t {
                    return Err(McfError::Mask(format!("mask length {} vs {} rows", m.len(), t)));
                }
                m.to_vec()
            }
            None => vec![true; t],
        };
        let count = keep.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(McfError::Mask("no unmasked rows to pool".into()));
        }
        let mut out = Tensor::zeros(&[d]);
        for r in 0..t {
            if keep[r] {
                for c in 0..d {
                    out.data_mut()[c] += xv.at(r, c);
                }
            }
        }
        out.data_mut().iter_mut().for_each(|v| *v /= count as f64);
        Ok(self.push(out, Op::MeanRows { x: x.0, keep, count }))
    }

    /// Concatenate along the last axis. Rank-1 inputs produce a rank-1
    /// output; rank-2 inputs must share their row count.
    pub fn concat_cols(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(McfError::Dim("concat_cols: no parts".into()));
        }
        let rank1 = self.value(parts[0]).rank() == 1;
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows || (v.rank() == 1) != rank1 {
                return Err(McfError::Dim(format!(
                    "concat_cols: incompatible part {:?}",
                    v.shape()
                )));
            }
            total += v.cols();
        }
        let mut out = Tensor::zeros(&[rows, total]);
        let mut off = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            let c = v.cols();
            for r in 0..rows {
                for j in 0..c {
                    out.set(r, off + j, v.at(r, j));
                }
            }
            off += c;
        }
        let out = if rank1 { out.reshape(&[total])? } else { out };
        Ok(self.push(out, Op::ConcatCols { parts: parts.iter().map(|p| p.0).collect() }))
    }

    pub fn slice_cols(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        let xv = self.value(x);
        if xv.rank() != 2 || start + len > xv.cols() {
            return Err(McfError::Dim(format!(
                "slice_cols: [{start}, {}) of {:?}",
                start + len,
                xv.shape()
            )));
        }
        let t = xv.rows();
        let mut out = Tensor::zeros(&[t, len]);
        for r in 0..t {
            for j in 0..len {
                out.set(r, j, xv.at(r, start + j));
            }
        }
        Ok(self.push(out, Op::SliceCols { x: x.0, start, len }))
    }

    pub fn reshape(&mut self, x: VarId, shape: &[usize]) -> Result<VarId> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape { x: x.0 }))
    }

    pub fn sum_all(&mut self, x: VarId) -> VarId {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::vector(vec![s]), Op::SumAll { x: x.0 })
    }

    /// Mean binary cross entropy against {0,1} targets, computed from
    /// logits with the probability clamped to [1e-7, 1-1e-7].
    pub fn bce_with_logits(&mut self, logits: VarId, targets: &[f64]) -> Result<VarId> {
        let lv = self.value(logits);
        if lv.numel() != targets.len() {
            return Err(McfError::Dim(format!(
                "bce: {} logits vs {} targets",
                lv.numel(),
                targets.len()
            )));
        }
        if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(McfError::Param("bce targets must be 0 or 1".into()));
        }
        let n = targets.len() as f64;
        let mut probs = Vec::with_capacity(targets.len());
        let mut loss = 0.0;
        for (&z, &t) in lv.data().iter().zip(targets) {
            let p = sigmoid(z);
            let pc = p.clamp(1e-7, 1.0 - 1e-7);
            loss += -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln());
            probs.push(p);
        }
        loss /= n;
        Ok(self.push(
            Tensor::vector(vec![loss]),
            Op::BceWithLogits { logits: logits.0, targets: targets.to_vec(), probs },
        ))
    }

    /// Mean squared error against a fixed target.
    pub fn mse_mean(&mut self, pred: VarId, target: &[f64]) -> Result<VarId> {
        let pv = self.value(pred);
        if pv.numel() != target.len() {
            return Err(McfError::Dim(format!(
                "mse: {} predictions vs {} targets",
                pv.numel(),
                target.len()
            )));
        }
        let n = target.len() as f64;
        let loss: f64 = pv
            .data()
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        Ok(self.push(
            Tensor::vector(vec![loss]),
            Op::MseMean { pred: pred.0, target: target.to_vec() },
        ))
    }

    /// Multi-class cross entropy from logits, stabilized by max subtraction.
    pub fn cross_entropy_logits(&mut self, logits: VarId, class: usize) -> Result<VarId> {
        let lv = self.value(logits);
        let n = lv.numel();
        if class >= n {
            return Err(McfError::Param(format!("class index {class} out of range 0..{n}")));
        }
        let mx = lv.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs = vec![0.0; n];
        let mut sum = 0.0;
        for (p, &z) in probs.iter_mut().zip(lv.data()) {
            *p = (z - mx).exp();
            sum += *p;
        }
        probs.iter_mut().for_each(|p| *p /= sum);
        let loss = -(probs[class].max(1e-300)).ln();
        Ok(self.push(
            Tensor::vector(vec![loss]),
            Op::CrossEntropyLogits { logits: logits.0, class, probs },
        ))
    }

    /// Reverse pass from a scalar node. Returns per-node gradients; the
    /// seed gradient is `scale` (use 1/batch for averaged batch losses).
    pub fn backward(&self, loss: VarId, scale: f64) -> Result<Vec<Option<Tensor>>> {
        if self.value(loss).numel() != 1 {
            return Err(McfError::Eval("backward requires a scalar loss node".into()));
        }
        if !self.value(loss).scalar().is_finite() {
            return Err(McfError::Eval("non-finite loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::vector(vec![scale]));

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn add_grad(&self, grads: &mut [Option<Tensor>], node: usize, g: Tensor) {
        match &mut grads[node] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf { .. } => {}
            Op::Add { a, b } => {
                self.add_grad(grads, *a, g.clone());
                self.add_grad(grads, *b, g.clone());
            }
            Op::AddScaled { a, b, ca, cb } => {
                let mut ga = g.clone();
                ga.data_mut().iter_mut().for_each(|v| *v *= ca);
                let mut gb = g.clone();
                gb.data_mut().iter_mut().for_each(|v| *v *= cb);
                self.add_grad(grads, *a, ga);
                self.add_grad(grads, *b, gb);
            }
            Op::AddBias { x, b } => {
                self.add_grad(grads, *x, g.clone());
                let cols = g.cols();
                let mut gb = Tensor::zeros(&[cols]);
                for r in 0..g.rows() {
                    for c in 0..cols {
                        gb.data_mut()[c] += g.at(r, c);
                    }
                }
                self.add_grad(grads, *b, gb);
            }
            Op::Scale { x, c } => {
                let mut gx = g.clone();
                gx.data_mut().iter_mut().for_each(|v| *v *= c);
                self.add_grad(grads, *x, gx);
            }
            Op::Matmul { a, b } => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                let ga = g.matmul(&bv.transpose())?;
                let gb = av.transpose().matmul(g)?;
                self.add_grad(grads, *a, ga);
                self.add_grad(grads, *b, gb);
            }
            Op::Transpose { x } => {
                self.add_grad(grads, *x, g.transpose());
            }
            Op::Relu { x } => {
                let xv = &self.nodes[*x].value;
                let mut gx = g.clone();
                for (gv, &v) in gx.data_mut().iter_mut().zip(xv.data()) {
                    if v <= 0.0 {
                        *gv = 0.0;
                    }
                }
                self.add_grad(grads, *x, gx);
            }
            Op::SoftmaxRows { x } => {
                let y = &self.nodes[i].value;
                let (t, n) = (y.rows(), y.cols());
                let mut gx = Tensor::zeros(&[t, n]);
                for r in 0..t {
                    let dot: f64 = (0..n).map(|c| g.at(r, c) * y.at(r, c)).sum();
                    for c in 0..n {
                        gx.set(r, c, y.at(r, c) * (g.at(r, c) - dot));
                    }
                }
                self.add_grad(grads, *x, gx);
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let gv = &self.nodes[*gamma].value;
                let t = xhat.rows();
                let d = xhat.cols();
                let mut gx = Tensor::zeros(self.nodes[*x].value.shape());
                let mut gg = Tensor::zeros(&[d]);
                let mut gb = Tensor::zeros(&[d]);
                // g arrives with the output's shape (possibly rank-1).
                let grow = |r: usize, c: usize| -> f64 {
                    g.data()[r * d + c]
                };
                for r in 0..t {
                    let mut mean_dxh = 0.0;
                    let mut mean_dxh_xh = 0.0;
                    let mut dxh = vec![0.0; d];
                    for c in 0..d {
                        let dy = grow(r, c);
                        dxh[c] = dy * gv.data()[c];
                        mean_dxh += dxh[c];
                        mean_dxh_xh += dxh[c] * xhat.at(r, c);
                        gg.data_mut()[c] += dy * xhat.at(r, c);
                        gb.data_mut()[c] += dy;
                    }
                    mean_dxh /= d as f64;
                    mean_dxh_xh /= d as f64;
                    for c in 0..d {
                        let v = inv_std[r] * (dxh[c] - mean_dxh - xhat.at(r, c) * mean_dxh_xh);
                        gx.data_mut()[r * d + c] = v;
                    }
                }
                self.add_grad(grads, *x, gx);
                self.add_grad(grads, *gamma, gg);
                self.add_grad(grads, *beta, gb);
            }
            Op::MulMask { x, mask } => {
                let mut gx = g.clone();
                for (v, m) in gx.data_mut().iter_mut().zip(mask) {
                    *v *= m;
                }
                self.add_grad(grads, *x, gx);
            }
            Op::MeanRows { x, keep, count } => {
                let xv = &self.nodes[*x].value;
                let (t, d) = (xv.rows(), xv.cols());
                let mut gx = Tensor::zeros(xv.shape());
                for r in 0..t {
                    if keep[r] {
                        for c in 0..d {
                            gx.data_mut()[r * d + c] = g.data()[c] / *count as f64;
                        }
                    }
                }
                self.add_grad(grads, *x, gx);
            }
            Op::ConcatCols { parts } => {
                let rows = self.nodes[i].value.rows();
                let total = self.nodes[i].value.cols();
                let mut off = 0;
                for &p in parts {
                    let pv = &self.nodes[p].value;
                    let c = pv.cols();
                    let mut gp = Tensor::zeros(pv.shape());
                    for r in 0..rows {
                        for j in 0..c {
                            gp.data_mut()[r * c + j] = g.data()[r * total + off + j];
                        }
                    }
                    self.add_grad(grads, p, gp);
                    off += c;
                }
            }
            Op::SliceCols { x, start, len } => {
                let xv = &self.nodes[*x].value;
                let (t, cols) = (xv.rows(), xv.cols());
                let mut gx = Tensor::zeros(xv.shape());
                for r in 0..t {
                    for j in 0..*len {
                        gx.data_mut()[r * cols + start + j] = g.at(r, j);
                    }
                }
                self.add_grad(grads, *x, gx);
            }
            Op::Reshape { x } => {
                let gx = g.reshape(self.nodes[*x].value.shape())?;
                self.add_grad(grads, *x, gx);
            }
            Op::BceWithLogits { logits, targets, probs } => {
                let gs = g.scalar();
                let n = targets.len() as f64;
                let mut gx = Tensor::zeros(self.nodes[*logits].value.shape());
                for (slot, (p, t)) in gx.data_mut().iter_mut().zip(probs.iter().zip(targets)) {
                    *slot = gs * (p - t) / n;
                }
                self.add_grad(grads, *logits, gx);
            }
            Op::MseMean { pred, target } => {
                let gs = g.scalar();
                let n = target.len() as f64;
                let pv = &self.nodes[*pred].value;
                let mut gx = Tensor::zeros(pv.shape());
                for (slot, (p, t)) in gx.data_mut().iter_mut().zip(pv.data().iter().zip(target)) {
                    *slot = gs * 2.0 * (p - t) / n;
                }
                self.add_grad(grads, *pred, gx);
            }
            Op::CrossEntropyLogits { logits, class, probs } => {
                let gs = g.scalar();
                let mut gx = Tensor::zeros(self.nodes[*logits].value.shape());
                for (c, slot) in gx.data_mut().iter_mut().enumerate() {
                    let one_hot = if c == *class { 1.0 } else { 0.0 };
                    *slot = gs * (probs[c] - one_hot);
                }
                self.add_grad(grads, *logits, gx);
            }
            Op::SumAll { x } => {
                let gs = g.scalar();
                let gx = Tensor::full(self.nodes[*x].value.shape(), gs);
                self.add_grad(grads, *x, gx);
            }
        }
        Ok(())
    }

    /// Backward pass that accumulates parameter gradients into `store`.
    /// Frozen parameters are left untouched.
    pub fn backward_into(&self, loss: VarId, scale: f64, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(loss, scale)?;
        for (node, grad) in self.nodes.iter().zip(&grads) {
            if let (Op::Leaf { param: Some(id) }, Some(g)) = (&node.op, grad) {
                store.accumulate_grad(*id, g)?;
            }
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
