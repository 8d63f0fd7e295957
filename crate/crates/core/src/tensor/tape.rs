use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use super::{gemm, Tensor};
use crate::error::{EccError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Shape relation between the two operands of an elementwise op.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Broadcast {
    Same,
    ScalarLeft,
    ScalarRight,
}

/// Gather/scatter plan for an edge-conditioned aggregation.
///
/// Edge `e` carries `x[src[e]]` through the matrix stored in row
/// `theta_row[e]` of the weight tensor and adds it to output vertex `dst[e]`.
/// The accumulated sum for vertex `i` is multiplied by `dst_scale[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgePlan {
    pub n_out: usize,
    pub n_in: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub theta_row: Vec<usize>,
    pub dst_scale: Vec<f64>,
}

impl EdgePlan {
    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
        broadcast: Broadcast,
    },
    Mul {
        a: Var,
        b: Var,
        broadcast: Broadcast,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Relu {
        x: Var,
    },
    Sum {
        x: Var,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    EdgeConv {
        theta: Var,
        x: Var,
        plan: Arc<EdgePlan>,
        d_in: usize,
        d_out: usize,
    },
    RowScale {
        x: Var,
        scale: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ChannelAffine {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gather {
        x: Var,
        argmax: Vec<usize>,
    },
    SegmentMean {
        x: Var,
        segments: Vec<Range<usize>>,
    },
    Mask {
        x: Var,
        mask: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Per-step record of a differentiable computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of the leaves that require them and were reached by backward.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v)
    }

    pub fn contains(&self, v: Var) -> bool {
        self.grads.contains_key(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Marker for "no preimage" in gather indices.
const NONE: usize = usize::MAX;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input that never receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable input; its gradient appears in [`Gradients`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(EccError::Index {
                what: "tape",
                index: v.0,
                len: self.nodes.len(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, b }, rg))
    }

    fn broadcast_of(&self, a: Var, b: Var, op: &'static str) -> Result<Broadcast> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(Broadcast::Same)
        } else if tb.is_scalar() {
            Ok(Broadcast::ScalarRight)
        } else if ta.is_scalar() {
            Ok(Broadcast::ScalarLeft)
        } else {
            Err(EccError::dim(op, ta.shape(), tb.shape()))
        }
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Broadcast)> {
        self.check(a)?;
        self.check(b)?;
        let broadcast = self.broadcast_of(a, b, op)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let value = match broadcast {
            Broadcast::Same => Tensor {
                shape: ta.shape.clone(),
                data: ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect(),
            },
            Broadcast::ScalarRight => {
                let s = tb.data[0];
                ta.map(|x| f(x, s))
            }
            Broadcast::ScalarLeft => {
                let s = ta.data[0];
                tb.map(|y| f(s, y))
            }
        };
        Ok((value, broadcast))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, broadcast) = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add { a, b, broadcast }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, broadcast) = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul { a, b, broadcast }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        Ok(self.push(value, Op::Scale { x, factor }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(x);
        Ok(self.push(value, Op::Relu { x }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.value(x).data.iter().sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::Sum { x }, rg))
    }

    /// `x[r x c] + bias[c]`, broadcasting the bias over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check(x)?;
        self.check(bias)?;
        let (tx, tb) = (self.value(x), self.value(bias));
        let c = tx.cols();
        if tx.shape.len() != 2 || tb.len() != c {
            return Err(EccError::dim("add_bias", tx.shape(), tb.shape()));
        }
        let mut value = tx.clone();
        for row in value.data.chunks_mut(c.max(1)) {
            for (v, b) in row.iter_mut().zip(&tb.data) {
                *v += b;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddBias { x, bias }, rg))
    }

    /// Edge-conditioned aggregation.
    ///
    /// `theta` is `[k x d_out*d_in]`, each row a row-major `d_out x d_in`
    /// matrix; `x` is `[plan.n_in x d_in]`; the result is `[plan.n_out x d_out]`.
    pub fn edge_conv(&mut self, theta: Var, x: Var, plan: Arc<EdgePlan>, d_out: usize) -> Result<Var> {
        self.check(theta)?;
        self.check(x)?;
        let (tt, tx) = (self.value(theta), self.value(x));
        if tx.shape.len() != 2 || tx.rows() != plan.n_in {
            return Err(EccError::dim("edge_conv input", tx.shape(), &[plan.n_in]));
        }
        let d_in = tx.cols();
        if tt.shape.len() != 2 || tt.cols() != d_out * d_in {
            return Err(EccError::dim("edge_conv weights", tt.shape(), &[d_out, d_in]));
        }
        let m = plan.num_edges();
        if plan.dst.len() != m || plan.theta_row.len() != m || plan.dst_scale.len() != plan.n_out {
            return Err(EccError::contract("edge plan arrays have inconsistent lengths"));
        }
        let k = tt.rows();
        let block = d_out * d_in;
        let mut out = vec![0.0; plan.n_out * d_out];
        for e in 0..m {
            let (j, i, t) = (plan.src[e], plan.dst[e], plan.theta_row[e]);
            if j >= plan.n_in || i >= plan.n_out || t >= k {
                return Err(EccError::Index {
                    what: "edge plan",
                    index: j.max(i).max(t),
                    len: plan.n_in.min(plan.n_out).min(k),
                });
            }
            let th = &tt.data[t * block..(t + 1) * block];
            let xj = &tx.data[j * d_in..(j + 1) * d_in];
            let yi = &mut out[i * d_out..(i + 1) * d_out];
            for (o, y) in yi.iter_mut().enumerate() {
                let row = &th[o * d_in..(o + 1) * d_in];
                *y += row.iter().zip(xj).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for (i, s) in plan.dst_scale.iter().enumerate() {
            for y in &mut out[i * d_out..(i + 1) * d_out] {
                *y *= s;
            }
        }
        let value = Tensor {
            shape: vec![plan.n_out, d_out],
            data: out,
        };
        let rg = self.rg(theta) || self.rg(x);
        Ok(self.push(
            value,
            Op::EdgeConv {
                theta,
                x,
                plan,
                d_in,
                d_out,
            },
            rg,
        ))
    }

    /// Multiplies row `i` of `x[r x c]` by `scale[i]` (`scale` has `r` entries).
    pub fn row_scale(&mut self, x: Var, scale: Var) -> Result<Var> {
        self.check(x)?;
        self.check(scale)?;
        let (tx, ts) = (self.value(x), self.value(scale));
        if ts.len() != tx.rows() {
            return Err(EccError::dim("row_scale", tx.shape(), ts.shape()));
        }
        let c = tx.cols();
        let mut value = tx.clone();
        for (i, s) in ts.data.iter().enumerate() {
            for v in &mut value.data[i * c..(i + 1) * c] {
                *v *= s;
            }
        }
        let rg = self.rg(x) || self.rg(scale);
        Ok(self.push(value, Op::RowScale { x, scale }, rg))
    }

    /// Train-mode batch normalization over the rows of `x[n x d]`.
    ///
    /// Returns the output and the per-channel batch mean and biased variance.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        self.check(x)?;
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let (n, d) = (tx.rows(), tx.cols());
        if tg.len() != d || tb.len() != d {
            return Err(EccError::dim("batch_norm", tx.shape(), tg.shape()));
        }
        if n < 2 {
            return Err(EccError::contract(format!(
                "batch normalization in train mode needs at least 2 rows, got {n}"
            )));
        }
        let mut mean = vec![0.0; d];
        for row in tx.data.chunks(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in tx.data.chunks(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = tx.data.clone();
        let mut out = vec![0.0; n * d];
        for (xr, yr) in xhat.chunks_mut(d).zip(out.chunks_mut(d)) {
            for c in 0..d {
                xr[c] = (xr[c] - mean[c]) * inv_std[c];
                yr[c] = xr[c] * tg.data[c] + tb.data[c];
            }
        }
        let value = Tensor {
            shape: tx.shape.clone(),
            data: out,
        };
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let v = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        );
        Ok((v, mean, var))
    }

    /// `(x - mean) * inv_std * gamma + beta` per channel with fixed statistics.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var, mean: Vec<f64>, inv_std: Vec<f64>) -> Result<Var> {
        self.check(x)?;
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let d = tx.cols();
        if tg.len() != d || tb.len() != d || mean.len() != d || inv_std.len() != d {
            return Err(EccError::dim("channel_affine", tx.shape(), tg.shape()));
        }
        let mut value = tx.clone();
        for row in value.data.chunks_mut(d.max(1)) {
            for c in 0..d {
                row[c] = (row[c] - mean[c]) * inv_std[c] * tg.data[c] + tb.data[c];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            value,
            Op::ChannelAffine {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            },
            rg,
        ))
    }

    /// Componentwise max of the rows of `x` grouped by `assignment` into
    /// `n_groups` output rows. Groups without members output 0.
    pub fn group_max(&mut self, x: Var, assignment: &[usize], n_groups: usize) -> Result<Var> {
        self.check(x)?;
        let tx = self.value(x);
        if assignment.len() != tx.rows() {
            return Err(EccError::dim("max_pool", tx.shape(), &[assignment.len()]));
        }
        let d = tx.cols();
        let mut argmax = vec![NONE; n_groups * d];
        for (r, &g) in assignment.iter().enumerate() {
            if g >= n_groups {
                return Err(EccError::Index {
                    what: "pooling map target",
                    index: g,
                    len: n_groups,
                });
            }
            for c in 0..d {
                let slot = &mut argmax[g * d + c];
                if *slot == NONE || tx.data[r * d + c] > tx.data[*slot] {
                    *slot = r * d + c;
                }
            }
        }
        self.push_gather(x, argmax, vec![n_groups, d])
    }

    /// Per-segment componentwise max; one output row per segment.
    pub fn segment_max(&mut self, x: Var, segments: &[Range<usize>]) -> Result<Var> {
        self.check(x)?;
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        let mut argmax = vec![NONE; segments.len() * d];
        for (s, seg) in segments.iter().enumerate() {
            if seg.is_empty() || seg.end > n {
                return Err(EccError::contract(format!("segment {seg:?} is empty or exceeds {n} rows")));
            }
            for r in seg.clone() {
                for c in 0..d {
                    let slot = &mut argmax[s * d + c];
                    if *slot == NONE || tx.data[r * d + c] > tx.data[*slot] {
                        *slot = r * d + c;
                    }
                }
            }
        }
        self.push_gather(x, argmax, vec![segments.len(), d])
    }

    fn push_gather(&mut self, x: Var, argmax: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let tx = self.value(x);
        let data = argmax
            .iter()
            .map(|&a| if a == NONE { 0.0 } else { tx.data[a] })
            .collect();
        let value = Tensor { shape, data };
        let rg = self.rg(x);
        Ok(self.push(value, Op::Gather { x, argmax }, rg))
    }

    /// Per-segment column mean; one output row per segment.
    pub fn segment_mean(&mut self, x: Var, segments: &[Range<usize>]) -> Result<Var> {
        self.check(x)?;
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        let mut data = vec![0.0; segments.len() * d];
        for (s, seg) in segments.iter().enumerate() {
            if seg.is_empty() || seg.end > n {
                return Err(EccError::contract(format!("segment {seg:?} is empty or exceeds {n} rows")));
            }
            let out = &mut data[s * d..(s + 1) * d];
            for r in seg.clone() {
                for (o, v) in out.iter_mut().zip(&tx.data[r * d..(r + 1) * d]) {
                    *o += v;
                }
            }
            let len = seg.len() as f64;
            out.iter_mut().for_each(|o| *o /= len);
        }
        let value = Tensor {
            shape: vec![segments.len(), d],
            data,
        };
        let rg = self.rg(x);
        Ok(self.push(
            value,
            Op::SegmentMean {
                x,
                segments: segments.to_vec(),
            },
            rg,
        ))
    }

    /// Elementwise product with a constant mask of the same length.
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        self.check(x)?;
        let tx = self.value(x);
        if mask.len() != tx.len() {
            return Err(EccError::dim("mask", tx.shape(), &[mask.len()]));
        }
        let value = Tensor {
            shape: tx.shape.clone(),
            data: tx.data.iter().zip(&mask).map(|(a, b)| a * b).collect(),
        };
        let rg = self.rg(x);
        Ok(self.push(value, Op::Mask { x, mask }, rg))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let tl = self.value(logits);
        let (b, c) = (tl.rows(), tl.cols());
        if tl.shape.len() != 2 || targets.len() != b || b == 0 {
            return Err(EccError::dim("softmax_cross_entropy", tl.shape(), &[targets.len()]));
        }
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(EccError::Index {
                    what: "class target",
                    index: t,
                    len: c,
                });
            }
            let row = &tl.data[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for (p, v) in probs[r * c..(r + 1) * c].iter_mut().zip(row) {
                *p = (v - max).exp() / z;
            }
            loss += z.ln() - (row[t] - max);
        }
        let value = Tensor::scalar(loss / b as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        if !self.value(loss).is_scalar() {
            return Err(EccError::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                out.grads.insert(
                    Var(idx),
                    Tensor {
                        shape: node.value.shape.clone(),
                        data: g,
                    },
                );
            }
        }
        Ok(out)
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.rg(v) {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(ga) = self.acc(grads, *a) {
                    // dA = dC * B^T
                    gemm(m, n, k, g, false, &tb.data, true, ga, true);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    // dB = A^T * dC
                    gemm(k, m, n, &ta.data, true, g, false, gb, true);
                }
            }
            Op::Add { a, b, broadcast } => {
                let total: f64 = g.iter().sum();
                for (v, scalar) in [
                    (*a, *broadcast == Broadcast::ScalarLeft),
                    (*b, *broadcast == Broadcast::ScalarRight),
                ] {
                    if let Some(gv) = self.acc(grads, v) {
                        if scalar {
                            gv[0] += total;
                        } else {
                            gv.iter_mut().zip(g).for_each(|(o, d)| *o += d);
                        }
                    }
                }
            }
            Op::Mul { a, b, broadcast } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                match broadcast {
                    Broadcast::Same => {
                        if let Some(ga) = self.acc(grads, *a) {
                            for ((o, d), y) in ga.iter_mut().zip(g).zip(&tb.data) {
                                *o += d * y;
                            }
                        }
                        if let Some(gb) = self.acc(grads, *b) {
                            for ((o, d), x) in gb.iter_mut().zip(g).zip(&ta.data) {
                                *o += d * x;
                            }
                        }
                    }
                    Broadcast::ScalarRight | Broadcast::ScalarLeft => {
                        let (tensor, scalar) = if *broadcast == Broadcast::ScalarRight {
                            (*a, *b)
                        } else {
                            (*b, *a)
                        };
                        let s = self.value(scalar).data[0];
                        let dot: f64 = g.iter().zip(&self.value(tensor).data).map(|(d, x)| d * x).sum();
                        if let Some(gt) = self.acc(grads, tensor) {
                            gt.iter_mut().zip(g).for_each(|(o, d)| *o += d * s);
                        }
                        if let Some(gs) = self.acc(grads, scalar) {
                            gs[0] += dot;
                        }
                    }
                }
            }
            Op::Scale { x, factor } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(o, d)| *o += d * factor);
                }
            }
            Op::Relu { x } => {
                let tx = self.value(*x);
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, d), v) in gx.iter_mut().zip(g).zip(&tx.data) {
                        if *v > 0.0 {
                            *o += d;
                        }
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            Op::AddBias { x, bias } => {
                let c = self.value(*bias).len();
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(o, d)| *o += d);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for row in g.chunks(c.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(o, d)| *o += d);
                    }
                }
            }
            Op::EdgeConv {
                theta,
                x,
                plan,
                d_in,
                d_out,
            } => self.backprop_edge_conv(*theta, *x, plan, *d_in, *d_out, g, grads),
            Op::RowScale { x, scale } => {
                let (tx, ts) = (self.value(*x), self.value(*scale));
                let c = tx.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (i, s) in ts.data.iter().enumerate() {
                        for (o, d) in gx[i * c..(i + 1) * c].iter_mut().zip(&g[i * c..(i + 1) * c]) {
                            *o += d * s;
                        }
                    }
                }
                if let Some(gs) = self.acc(grads, *scale) {
                    for (i, o) in gs.iter_mut().enumerate() {
                        *o += g[i * c..(i + 1) * c]
                            .iter()
                            .zip(&tx.data[i * c..(i + 1) * c])
                            .map(|(d, v)| d * v)
                            .sum::<f64>();
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let tg = self.value(*gamma);
                let d = tg.len();
                let n = xhat.len() / d.max(1);
                let mut sum_dy = vec![0.0; d];
                let mut sum_dy_xhat = vec![0.0; d];
                for (gr, xr) in g.chunks(d).zip(xhat.chunks(d)) {
                    for c in 0..d {
                        sum_dy[c] += gr[c];
                        sum_dy_xhat[c] += gr[c] * xr[c];
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let nf = n as f64;
                    for ((o, gr), xr) in gx.chunks_mut(d).zip(g.chunks(d)).zip(xhat.chunks(d)) {
                        for c in 0..d {
                            let k = tg.data[c] * inv_std[c] / nf;
                            o[c] += k * (nf * gr[c] - sum_dy[c] - xr[c] * sum_dy_xhat[c]);
                        }
                    }
                }
                if let Some(gg) = self.acc(grads, *gamma) {
                    gg.iter_mut().zip(&sum_dy_xhat).for_each(|(o, v)| *o += v);
                }
                if let Some(gb) = self.acc(grads, *beta) {
                    gb.iter_mut().zip(&sum_dy).for_each(|(o, v)| *o += v);
                }
            }
            Op::ChannelAffine {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let (tx, tg) = (self.value(*x), self.value(*gamma));
                let d = tg.len();
                if let Some(gx) = self.acc(grads, *x) {
                    for (o, gr) in gx.chunks_mut(d).zip(g.chunks(d)) {
                        for c in 0..d {
                            o[c] += gr[c] * inv_std[c] * tg.data[c];
                        }
                    }
                }
                if let Some(gg) = self.acc(grads, *gamma) {
                    for (gr, xr) in g.chunks(d).zip(tx.data.chunks(d)) {
                        for c in 0..d {
                            gg[c] += gr[c] * (xr[c] - mean[c]) * inv_std[c];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *beta) {
                    for gr in g.chunks(d) {
                        gb.iter_mut().zip(gr).for_each(|(o, v)| *o += v);
                    }
                }
            }
            Op::Gather { x, argmax } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (&a, d) in argmax.iter().zip(g) {
                        if a != NONE {
                            gx[a] += d;
                        }
                    }
                }
            }
            Op::SegmentMean { x, segments } => {
                let d = self.value(*x).cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (s, seg) in segments.iter().enumerate() {
                        let len = seg.len() as f64;
                        for r in seg.clone() {
                            for c in 0..d {
                                gx[r * d + c] += g[s * d + c] / len;
                            }
                        }
                    }
                }
            }
            Op::Mask { x, mask } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, d), m) in gx.iter_mut().zip(g).zip(mask) {
                        *o += d * m;
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                let c = self.value(*logits).cols();
                let b = targets.len() as f64;
                if let Some(gl) = self.acc(grads, *logits) {
                    for (r, &t) in targets.iter().enumerate() {
                        for k in 0..c {
                            let onehot = if k == t { 1.0 } else { 0.0 };
                            gl[r * c + k] += g[0] * (probs[r * c + k] - onehot) / b;
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_edge_conv(
        &self,
        theta: Var,
        x: Var,
        plan: &EdgePlan,
        d_in: usize,
        d_out: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (tt, tx) = (self.value(theta), self.value(x));
        let block = d_out * d_in;
        // Gradient w.r.t. the unscaled sum.
        let mut gs = g.to_vec();
        for (i, s) in plan.dst_scale.iter().enumerate() {
            for v in &mut gs[i * d_out..(i + 1) * d_out] {
                *v *= s;
            }
        }
        if let Some(gx) = self.acc(grads, x) {
            for e in 0..plan.num_edges() {
                let (j, i, t) = (plan.src[e], plan.dst[e], plan.theta_row[e]);
                let th = &tt.data[t * block..(t + 1) * block];
                let gi = &gs[i * d_out..(i + 1) * d_out];
                let gxj = &mut gx[j * d_in..(j + 1) * d_in];
                for (o, &go) in gi.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    for (acc, w) in gxj.iter_mut().zip(&th[o * d_in..(o + 1) * d_in]) {
                        *acc += go * w;
                    }
                }
            }
        }
        if let Some(gt) = self.acc(grads, theta) {
            for e in 0..plan.num_edges() {
                let (j, i, t) = (plan.src[e], plan.dst[e], plan.theta_row[e]);
                let xj = &tx.data[j * d_in..(j + 1) * d_in];
                let gi = &gs[i * d_out..(i + 1) * d_out];
                let gth = &mut gt[t * block..(t + 1) * block];
                for (o, &go) in gi.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    for (acc, v) in gth[o * d_in..(o + 1) * d_in].iter_mut().zip(xj) {
                        *acc += go * v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_and_subgradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn add_zero_scalar_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.5, -2.0]));
        let z = tape.leaf(Tensor::scalar(0.0));
        let y = tape.add(x, z).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn incompatible_shapes_rejected() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2]));
        let b = tape.leaf(Tensor::zeros(&[3]));
        assert!(matches!(tape.add(a, b), Err(EccError::Dimension { .. })));
        assert!(matches!(tape.mul(a, b), Err(EccError::Dimension { .. })));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2, 3]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &Tensor::full(&[2, 3], 1.0));
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, -2.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(EccError::Contract(_))));
    }

    #[test]
    fn untouched_params_absent() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0]));
        let unused = tape.param(Tensor::vector(vec![1.0]));
        let constant = tape.leaf(Tensor::vector(vec![3.0]));
        let y = tape.mul(x, constant).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.contains(x));
        assert!(!g.contains(unused));
        assert!(!g.contains(constant));
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::from_rows(&[vec![0.3, 0.3]]).unwrap());
        let loss = tape.softmax_cross_entropy(l, &[1]).unwrap();
        assert!((tape.value(loss).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_target_out_of_range() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::zeros(&[1, 2]));
        assert!(matches!(
            tape.softmax_cross_entropy(l, &[2]),
            Err(EccError::Index { .. })
        ));
    }

    #[test]
    fn group_max_of_two_rows() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 2.0]]).unwrap());
        let y = tape.group_max(x, &[0, 0], 1).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 5.0]);
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape.leaf(Tensor::new(&[3, 4], (0..12).map(|i| (i as f64).sin()).collect()).unwrap());
            let b = tape.leaf(Tensor::new(&[4, 2], (0..8).map(|i| (i as f64).cos()).collect()).unwrap());
            let c = tape.matmul(a, b).unwrap();
            let r = tape.relu(c).unwrap();
            tape.value(r).clone()
        };
        assert_eq!(run().data(), run().data());
    }
}
