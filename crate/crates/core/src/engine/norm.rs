//! Batch normalization over every axis but the last (channel) one.

use alloc::vec;
use alloc::vec::Vec;

use super::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running per-channel statistics used in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BnStats<T> {
    /// Mean 0, variance 1.
    pub fn new(channels: usize) -> Self {
        BnStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    /// Exponential moving average toward the batch moments.
    pub fn update(&mut self, batch: &BatchMoments<T>, momentum: T) {
        let keep = T::one() - momentum;
        for (r, &m) in self.mean.iter_mut().zip(&batch.mean) {
            *r = keep * *r + momentum * m;
        }
        for (r, &v) in self.var.iter_mut().zip(&batch.unbiased_var) {
            *r = keep * *r + momentum * v;
        }
    }
}

/// Per-channel moments of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMoments<T> {
    pub mean: Vec<T>,
    pub unbiased_var: Vec<T>,
}

impl<T: Real> Tape<T> {
    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<usize> {
        let xs = self.shape(x);
        let c = *xs.last().ok_or_else(|| Error::dim("batchnorm", "rank", 1, 0))?;
        if self.shape(gamma) != [c] {
            return Err(Error::dim("batchnorm", "gamma length", c, self.value(gamma).len()));
        }
        if self.shape(beta) != [c] {
            return Err(Error::dim("batchnorm", "beta length", c, self.value(beta).len()));
        }
        Ok(c)
    }

    /// Normalizes with the statistics of this batch.
    pub fn batchnorm_train(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, BatchMoments<T>)> {
        let c = self.bn_check(x, gamma, beta)?;
        let data = self.value(x).data();
        let count = data.len() / c.max(1);
        if count < 2 {
            return Err(Error::DegenerateStatistics { count });
        }
        let inv_count = T::one() / T::lit(count as f64);
        let mut mean = vec![T::zero(); c];
        for px in data.chunks_exact(c) {
            mean.iter_mut().zip(px).for_each(|(m, &v)| *m = *m + v);
        }
        mean.iter_mut().for_each(|m| *m = *m * inv_count);
        let mut var = vec![T::zero(); c];
        for px in data.chunks_exact(c) {
            for ((s, &v), &m) in var.iter_mut().zip(px).zip(&mean) {
                let d = v - m;
                *s = *s + d * d;
            }
        }
        let unbiased: Vec<T> = var.iter().map(|&s| s / T::lit((count - 1) as f64)).collect();
        var.iter_mut().for_each(|s| *s = *s * inv_count);
        let eps = T::lit(BN_EPSILON);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out = self.bn_apply(x, gamma, beta, &mean, inv_std, true)?;
        Ok((
            out,
            BatchMoments {
                mean,
                unbiased_var: unbiased,
            },
        ))
    }

    /// Normalizes with fixed running statistics.
    pub fn batchnorm_eval(&mut self, x: Var, gamma: Var, beta: Var, stats: &BnStats<T>) -> Result<Var> {
        let c = self.bn_check(x, gamma, beta)?;
        if stats.mean.len() != c || stats.var.len() != c {
            return Err(Error::dim("batchnorm", "running statistics length", c, stats.mean.len()));
        }
        let eps = T::lit(BN_EPSILON);
        let inv_std = stats.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        self.bn_apply(x, gamma, beta, &stats.mean, inv_std, false)
    }

    fn bn_apply(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        inv_std: Vec<T>,
        batch_stats: bool,
    ) -> Result<Var> {
        let c = mean.len();
        let xv = self.value(x);
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = Vec::with_capacity(xv.len());
        let mut out = Vec::with_capacity(xv.len());
        for px in xv.data().chunks_exact(c) {
            for ch in 0..c {
                let h = (px[ch] - mean[ch]) * inv_std[ch];
                xhat.push(h);
                out.push(g[ch] * h + b[ch]);
            }
        }
        let out = Tensor::from_vec(xv.shape(), out)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            out,
            rg,
            Op::BatchNorm {
                input: x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        ))
    }
}

/// Returns `(dx, dgamma, dbeta)`; `dx` only when requested.
pub(super) fn backward<T: Real>(
    gamma: &[T],
    xhat: &[T],
    inv_std: &[T],
    batch_stats: bool,
    dy: &[T],
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let c = gamma.len();
    let count = xhat.len() / c;
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (h, d) in xhat.chunks_exact(c).zip(dy.chunks_exact(c)) {
        for ch in 0..c {
            dgamma[ch] = dgamma[ch] + d[ch] * h[ch];
            dbeta[ch] = dbeta[ch] + d[ch];
        }
    }
    if !want_dx {
        return (None, dgamma, dbeta);
    }
    let mut dx = Vec::with_capacity(xhat.len());
    if batch_stats {
        // dx = γ·inv_std/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
        let m = T::lit(count as f64);
        for (h, d) in xhat.chunks_exact(c).zip(dy.chunks_exact(c)) {
            for ch in 0..c {
                let scale = gamma[ch] * inv_std[ch] / m;
                dx.push(scale * (m * d[ch] - dbeta[ch] - h[ch] * dgamma[ch]));
            }
        }
    } else {
        for d in dy.chunks_exact(c) {
            for ch in 0..c {
                dx.push(d[ch] * gamma[ch] * inv_std[ch]);
            }
        }
    }
    (Some(dx), dgamma, dbeta)
}
