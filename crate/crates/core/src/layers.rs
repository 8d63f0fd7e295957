//! Non-convolutional layers: batch normalization, pooling, fully connected,
//! dropout and the classification loss.

use std::ops::Range;

use rand::Rng;

use crate::error::{EccError, Result};
use crate::graph::PoolingMap;
use crate::init::glorot_uniform;
use crate::tensor::{Tape, Tensor, Var};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine batch normalization with running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Batch statistics observed in one train-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub biased_var: Vec<f64>,
    pub count: usize,
}

impl BatchNormState {
    pub fn new(d: usize) -> Self {
        BatchNormState {
            gamma: Tensor::full(&[d], 1.0),
            beta: Tensor::zeros(&[d]),
            running_mean: Tensor::zeros(&[d]),
            running_var: Tensor::full(&[d], 1.0),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes `x[n x d]` on a tape. Train mode returns the batch
    /// statistics, to be folded in with [`BatchNormState::update`].
    pub fn forward(&self, tape: &mut Tape, gamma: Var, beta: Var, x: Var, mode: Mode) -> Result<(Var, Option<BatchStats>)> {
        match mode {
            Mode::Train => {
                let count = tape.value(x).rows();
                let (y, mean, biased_var) = tape.batch_norm(x, gamma, beta, self.epsilon)?;
                Ok((
                    y,
                    Some(BatchStats {
                        mean,
                        biased_var,
                        count,
                    }),
                ))
            }
            Mode::Eval => {
                let inv_std = self
                    .running_var
                    .data()
                    .iter()
                    .map(|v| 1.0 / (v + self.epsilon).sqrt())
                    .collect();
                let y = tape.channel_affine(x, gamma, beta, self.running_mean.data().to_vec(), inv_std)?;
                Ok((y, None))
            }
        }
    }

    /// Exponential moving average update; the variance is stored unbiased.
    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        let n = stats.count as f64;
        let correction = if stats.count > 1 { n / (n - 1.0) } else { 1.0 };
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(&stats.biased_var) {
            *r = (1.0 - m) * *r + m * b * correction;
        }
    }
}

/// Tape-free batch normalization; train mode updates the running statistics.
pub fn batchnorm(x: &Tensor, st: &mut BatchNormState, mode: Mode) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (g, b) = (tape.leaf(st.gamma.clone()), tape.leaf(st.beta.clone()));
    let xv = tape.leaf(x.clone());
    let (y, stats) = st.forward(&mut tape, g, b, xv, mode)?;
    if let Some(stats) = stats {
        st.update(&stats);
    }
    Ok(tape.value(y).clone())
}

/// Graph max pooling along a [`PoolingMap`].
pub fn max_pool(tape: &mut Tape, x: Var, map: &PoolingMap) -> Result<Var> {
    tape.group_max(x, map.assignment(), map.n_coarse())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlobalPool {
    Average,
    Max,
}

/// Column-wise mean or max per segment of rows (one segment per graph).
pub fn global_pool(tape: &mut Tape, x: Var, segments: &[Range<usize>], kind: GlobalPool) -> Result<Var> {
    match kind {
        GlobalPool::Average => tape.segment_mean(x, segments),
        GlobalPool::Max => tape.segment_max(x, segments),
    }
}

/// Inverted dropout; eval mode is the identity.
pub fn dropout<R: Rng + ?Sized>(tape: &mut Tape, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(EccError::contract(format!("dropout probability must be in [0, 1), got {p}")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let mask = (0..tape.value(x).len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    tape.mask(x, mask)
}

/// Fully connected layer `x * W + b` with `W[in x out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Linear {
            weight: glorot_uniform(d_in, d_out, rng),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, tape: &mut Tape, weight: Var, bias: Var, x: Var) -> Result<Var> {
        let y = tape.matmul(x, weight)?;
        tape.add_bias(y, bias)
    }
}

/// Mean cross-entropy of `targets` under the row softmax of `logits`.
pub fn softmax_cross_entropy(tape: &mut Tape, logits: Var, targets: &[usize]) -> Result<Var> {
    tape.softmax_cross_entropy(logits, targets)
}

/// Row-wise softmax without a tape.
pub fn softmax(logits: &Tensor) -> Tensor {
    let c = logits.cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Index of the first maximal entry.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
