//! Label-smoothing training with Adam and a step learning-rate schedule.

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::Tape;
use crate::error::{Error, Result};
use crate::imageproc::{translate_augment, ImageMode, RawImage};
use crate::model::{stack_images, Mode, Param, WriterNet};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// The learning rate halves every this many epochs.
    pub halve_every: usize,
    pub weight_decay: f64,
    /// Label smoothing ε.
    pub epsilon: f64,
    pub seed: u64,
    /// Random ±4 px translation of training images.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr0: 1e-4,
            halve_every: 10,
            weight_decay: 1e-4,
            epsilon: 0.1,
            seed: 0,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} must be positive")));
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.batch_size == 0 {
            return bad("batch size");
        }
        if self.halve_every == 0 {
            return bad("halving period");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("learning rate");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("label smoothing {} not in [0, 1)", self.epsilon)));
        }
        Ok(())
    }

    /// `lr0 · 0.5^⌊epoch / halve_every⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * 0.5f64.powi((epoch / self.halve_every) as i32)
    }
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &[Param<T>]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. `grads[i]` belongs to `params[i]`; `None` is a zero
    /// gradient.
    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Option<&[T]>], lr: f64, weight_decay: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::dim("adam", "parameter count", params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if g.len() != p.value.len() {
                    return Err(Error::dim("adam", format!("{} elements", p.name), p.value.len(), g.len()));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient { param: p.name.clone() });
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let bias1 = T::lit(1.0 - self.beta1.powi(t));
        let bias2 = T::lit(1.0 - self.beta2.powi(t));
        let (lr, wd, eps) = (T::lit(lr), T::lit(weight_decay), T::lit(self.eps));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let data = p.value.data_mut();
            for i in 0..data.len() {
                let grad = g.map_or(T::zero(), |g| g[i]) + wd * data[i];
                m[i] = b1 * m[i] + (T::one() - b1) * grad;
                v[i] = b2 * v[i] + (T::one() - b2) * grad * grad;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                data[i] = data[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// A preprocessed 64×128 network input with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RawImage,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_top1: f64,
}

/// Index of the largest value; ties go to the smaller index.
pub fn argmax<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Owns the optimizer state and the data-order generator of one run.
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub mode: ImageMode,
    adam: Adam<T>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: &WriterNet<T>, config: TrainConfig, mode: ImageMode) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            config,
            mode,
            adam: Adam::new(net.params()),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_da7a),
            epoch: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One optimizer step on `batch`, returning the batch loss and the
    /// number of correct top-1 predictions.
    pub fn step(&mut self, net: &mut WriterNet<T>, batch: &[&Sample], lr: f64, batch_index: usize) -> Result<(f64, usize)> {
        let mut images = Vec::with_capacity(batch.len());
        for s in batch {
            let img = if self.config.augment {
                translate_augment(&s.image, self.mode, &mut self.rng)
            } else {
                s.image.clone()
            };
            images.push(img.to_tensor::<T>());
        }
        let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(stack_images(&images)?, false);
        let pass = net.forward(&mut tape, x, Mode::Train)?;
        let loss = tape.label_smoothing_loss(pass.output.logits, &labels, T::lit(self.config.epsilon))?;
        let loss_value = tape.value(loss).data()[0].to_f64_lossy();
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss { batch: batch_index });
        }
        let n = net.config().n_writers;
        let correct = tape
            .value(pass.output.logits)
            .data()
            .chunks_exact(n)
            .zip(&labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
        tape.backward(loss)?;
        let grads: Vec<Option<&[T]>> = pass.params.iter().map(|&v| tape.grad_slice(v)).collect();
        self.adam
            .step(net.params_mut(), &grads, lr, self.config.weight_decay)?;
        net.update_running_stats(&pass.moments);
        Ok((loss_value, correct))
    }

    /// Shuffles `samples`, runs every mini-batch (the last one may be
    /// short) and reports the epoch's running loss and accuracy.
    pub fn run_epoch(&mut self, net: &mut WriterNet<T>, samples: &[Sample]) -> Result<EpochMetrics> {
        if samples.is_empty() {
            return Err(Error::Input("empty training split".into()));
        }
        let lr = self.config.lr_at(self.epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, ok) = self.step(net, &batch, lr, b)?;
            loss_sum += loss * batch.len() as f64;
            correct += ok;
        }
        let metrics = EpochMetrics {
            epoch: self.epoch,
            lr,
            train_loss: loss_sum / samples.len() as f64,
            train_top1: correct as f64 / samples.len() as f64,
        };
        self.epoch += 1;
        Ok(metrics)
    }
}

/// Runs every configured epoch, handing each epoch's metrics to `on_epoch`.
pub fn train<T: Real>(
    net: &mut WriterNet<T>,
    samples: &[Sample],
    config: TrainConfig,
    mode: ImageMode,
    mut on_epoch: impl FnMut(&EpochMetrics, &WriterNet<T>),
) -> Result<Vec<EpochMetrics>> {
    if samples.is_empty() {
        return Err(Error::Input("empty training split".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.label >= net.config().n_writers) {
        return Err(Error::Input(format!(
            "label {} out of range for {} writers",
            s.label,
            net.config().n_writers
        )));
    }
    let mut trainer = Trainer::new(net, config, mode)?;
    let mut log = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let m = trainer.run_epoch(net, samples)?;
        on_epoch(&m, net);
        log.push(m);
    }
    Ok(log)
}
