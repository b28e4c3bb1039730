//! Cross-entropy against a label-smoothed target.
//!
//! With `p = softmax(z)` and target `q = (1-ε)·onehot(y) + ε/N`, the loss
//! of one sample is `−(1−ε)·log p_y − (ε/N)·Σ_n log p_n`. Everything is
//! computed through `log_softmax` so finite logits never produce `−∞`.

use alloc::vec::Vec;

use super::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Numerically stable `log softmax`.
pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Loss of a single sample.
pub fn label_smooth_loss<T: Real>(logits: &[T], label: usize, epsilon: T) -> T {
    let logp = log_softmax(logits);
    let n = T::lit(logits.len() as f64);
    let sum_logp: T = logp.iter().copied().sum();
    -(T::one() - epsilon) * logp[label] - epsilon / n * sum_logp
}

impl<T: Real> Tape<T> {
    /// Mean label-smoothed loss over a batch of logits `[b, n]`.
    pub fn label_smoothing_loss(&mut self, logits: Var, labels: &[usize], epsilon: T) -> Result<Var> {
        let shape = self.shape(logits);
        if shape.len() != 2 {
            return Err(Error::dim("label_smoothing_loss", "logit rank", 2, shape.len()));
        }
        let (b, n) = (shape[0], shape[1]);
        if labels.len() != b {
            return Err(Error::dim("label_smoothing_loss", "label count", b, labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
            return Err(Error::Input(alloc::format!("label {bad} out of range for {n} classes")));
        }
        let z = self.value(logits).data();
        let mut probs = Vec::with_capacity(b * n);
        let mut total = T::zero();
        for (row, &y) in z.chunks_exact(n).zip(labels) {
            let logp = log_softmax(row);
            let sum_logp: T = logp.iter().copied().sum();
            total = total - (T::one() - epsilon) * logp[y] - epsilon / T::lit(n as f64) * sum_logp;
            probs.extend(logp.iter().map(|v| v.exp()));
        }
        let mean = total / T::lit(b as f64);
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(mean),
            rg,
            Op::LabelSmoothing {
                logits,
                labels: labels.to_vec(),
                epsilon,
                probs,
            },
        ))
    }
}

/// `∂loss/∂z_n = (p_n − q_n) / b`.
pub(super) fn backward<T: Real>(labels: &[usize], epsilon: T, probs: &[T], dy: T) -> Vec<T> {
    let b = labels.len();
    let n = probs.len() / b;
    let uniform = epsilon / T::lit(n as f64);
    let scale = dy / T::lit(b as f64);
    let mut g = Vec::with_capacity(probs.len());
    for (row, &y) in probs.chunks_exact(n).zip(labels) {
        for (k, &p) in row.iter().enumerate() {
            let q = if k == y { T::one() - epsilon + uniform } else { uniform };
            g.push((p - q) * scale);
        }
    }
    g
}
