//! The full network: backbone, head and classifier with owned parameters.

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::NetConfig;
use super::head::{classify, embed_fragment, run_head, segment_fragments, GruVars};
use crate::engine::{BatchMoments, BnStats, Tape, Var, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::imageproc::{CANVAS_HEIGHT, CANVAS_WIDTH};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Standard deviation of the classifier weight initialization.
pub const CLASSIFIER_INIT_STD: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvIdx {
    weight: usize,
    bias: usize,
    gamma: usize,
    beta: usize,
    stats: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    convs: Vec<[ConvIdx; 2]>,
    fragment_fc: Option<(usize, usize)>,
    gru: Option<[usize; 9]>,
    classifier: (usize, usize),
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct NetOutput {
    /// Local feature map `[b, 8, 16, c_l]`.
    pub f_l: Var,
    /// Global context `[b, d]`, only for variants that use it.
    pub f_g: Option<Var>,
    /// Head feature `f`, `[b, d]`.
    pub feature: Var,
    /// Classifier output `[b, n_writers]`.
    pub logits: Var,
}

/// Result of [`WriterNet::forward`].
pub struct Pass<T> {
    pub output: NetOutput,
    /// Parameter handles, in [`WriterNet::params`] order.
    pub params: Vec<Var>,
    /// Batch moments per normalization layer (train mode only).
    pub moments: Vec<BatchMoments<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriterNet<T> {
    config: NetConfig,
    params: Vec<Param<T>>,
    bn_names: Vec<String>,
    bn: Vec<BnStats<T>>,
    layout: Layout,
}

impl<T: Real> WriterNet<T> {
    /// Allocates every parameter of `config` with zeros (γ = 1, running
    /// variance 1).
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let ch = config.backbone.channels();
        let mut params = Vec::new();
        let mut bn_names = Vec::new();
        let mut bn = Vec::new();
        let add = |params: &mut Vec<Param<T>>, name: String, shape: &[usize], fill: T| {
            params.push(Param {
                name,
                value: Tensor::full(shape, fill),
            });
            params.len() - 1
        };

        let mut convs = Vec::new();
        let mut cin = 1;
        for (b, &cout) in ch.iter().enumerate().take(config.n_blocks()) {
            let mut pair = [None; 2];
            for (j, slot) in pair.iter_mut().enumerate() {
                let input = if j == 0 { cin } else { cout };
                let prefix = format!("backbone.block{}.", b + 1);
                let weight = add(&mut params, format!("{prefix}conv{}.weight", j + 1), &[3, 3, input, cout], T::zero());
                let bias = add(&mut params, format!("{prefix}conv{}.bias", j + 1), &[cout], T::zero());
                let gamma = add(&mut params, format!("{prefix}bn{}.gamma", j + 1), &[cout], T::one());
                let beta = add(&mut params, format!("{prefix}bn{}.beta", j + 1), &[cout], T::zero());
                bn_names.push(format!("{prefix}bn{}", j + 1));
                bn.push(BnStats::new(cout));
                *slot = Some(ConvIdx {
                    weight,
                    bias,
                    gamma,
                    beta,
                    stats: bn.len() - 1,
                });
            }
            convs.push(pair.map(|p| p.expect("filled")));
            cin = cout;
        }

        let kind = config.variant.kind;
        let (local, dim) = (config.backbone.local_dim(), config.backbone.feature_dim());
        let fragment_fc = kind.uses_fragments().then(|| {
            (
                add(&mut params, "head.fragment_fc.weight".into(), &[local, dim], T::zero()),
                add(&mut params, "head.fragment_fc.bias".into(), &[dim], T::zero()),
            )
        });
        let gru = kind.recurrent().then(|| {
            let mut idx = [0; 9];
            for (i, name) in ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h"].iter().enumerate() {
                idx[i] = add(&mut params, format!("head.gru.{name}"), &[dim, dim], T::zero());
            }
            for (i, name) in ["b_z", "b_r", "b_h"].iter().enumerate() {
                idx[6 + i] = add(&mut params, format!("head.gru.{name}"), &[dim], T::zero());
            }
            idx
        });
        let classifier = (
            add(&mut params, "classifier.weight".into(), &[dim, config.n_writers], T::zero()),
            add(&mut params, "classifier.bias".into(), &[config.n_writers], T::zero()),
        );
        Ok(WriterNet {
            config,
            params,
            bn_names,
            bn,
            layout: Layout {
                convs,
                fragment_fc,
                gru,
                classifier,
            },
        })
    }

    /// He-normal convolutions, Xavier-uniform fragment FC and GRU matrices,
    /// small-normal classifier, zero biases.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = net.layout.clone();
        for pair in &layout.convs {
            for c in pair {
                let w = &mut net.params[c.weight].value;
                let fan_in = 9 * w.shape()[2];
                fill_normal(w, (2.0 / fan_in as f64).sqrt(), &mut rng);
            }
        }
        if let Some((w, _)) = layout.fragment_fc {
            fill_xavier(&mut net.params[w].value, &mut rng);
        }
        if let Some(gru) = layout.gru {
            for &i in &gru[..6] {
                fill_xavier(&mut net.params[i].value, &mut rng);
            }
        }
        fill_normal(&mut net.params[layout.classifier.0].value, CLASSIFIER_INIT_STD, &mut rng);
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn bn_stats(&self) -> &[BnStats<T>] {
        &self.bn
    }

    pub fn bn_stats_mut(&mut self) -> &mut [BnStats<T>] {
        &mut self.bn
    }

    /// Trainable parameter count.
    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Parameters followed by normalization running statistics
    /// (`<layer>.running_mean`, `<layer>.running_var`).
    pub fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out: Vec<(String, Tensor<T>)> =
            self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        for (name, s) in self.bn_names.iter().zip(&self.bn) {
            let c = s.mean.len();
            out.push((
                format!("{name}.running_mean"),
                Tensor::from_vec(&[c], s.mean.clone()).expect("length"),
            ));
            out.push((
                format!("{name}.running_var"),
                Tensor::from_vec(&[c], s.var.clone()).expect("length"),
            ));
        }
        out
    }

    /// Overwrites one parameter or running statistic by name.
    pub fn set_named(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if let Some(p) = self.params.iter_mut().find(|p| p.name == name) {
            if p.value.shape() != value.shape() {
                return Err(Error::dim("set_named", format!("{name} elements"), p.value.len(), value.len()));
            }
            p.value = value;
            return Ok(());
        }
        for (layer, s) in self.bn_names.iter().zip(self.bn.iter_mut()) {
            let target = if name.strip_prefix(layer.as_str()) == Some(".running_mean") {
                &mut s.mean
            } else if name.strip_prefix(layer.as_str()) == Some(".running_var") {
                &mut s.var
            } else {
                continue;
            };
            if target.len() != value.len() {
                return Err(Error::dim("set_named", format!("{name} elements"), target.len(), value.len()));
            }
            *target = value.into_data();
            return Ok(());
        }
        Err(Error::Config(format!("no tensor named `{name}` in {}", self.config.describe())))
    }

    /// Same network at another precision.
    pub fn cast<U: Real>(&self) -> WriterNet<U> {
        WriterNet {
            config: self.config,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            bn_names: self.bn_names.clone(),
            bn: self
                .bn
                .iter()
                .map(|s| BnStats {
                    mean: s.mean.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
                    var: s.var.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
                })
                .collect(),
            layout: self.layout.clone(),
        }
    }

    /// Records the forward graph for a batch of images `[b, 64, 128, 1]`.
    ///
    /// Parameters become leaves that require gradients in train mode.
    pub fn forward(&self, tape: &mut Tape<T>, images: Var, mode: Mode) -> Result<Pass<T>> {
        let shape = tape.shape(images);
        let expected = [CANVAS_HEIGHT, CANVAS_WIDTH, 1];
        if shape.len() != 4 {
            return Err(Error::dim("forward", "input rank", 4, shape.len()));
        }
        for (axis, (&got, &want)) in ["height", "width", "depth"].iter().zip(shape[1..].iter().zip(&expected)) {
            if got != want {
                return Err(Error::dim("forward", *axis, want, got));
            }
        }
        let train = mode == Mode::Train;
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), train))
            .collect();
        let mut moments = Vec::new();

        let mut x = images;
        let mut f_l = None;
        for (b, pair) in self.layout.convs.iter().enumerate() {
            for c in pair {
                x = tape.conv3x3(x, vars[c.weight], vars[c.bias])?;
                x = match mode {
                    Mode::Train => {
                        let (y, m) = tape.batchnorm_train(x, vars[c.gamma], vars[c.beta])?;
                        moments.push(m);
                        y
                    }
                    Mode::Eval => tape.batchnorm_eval(x, vars[c.gamma], vars[c.beta], &self.bn[c.stats])?,
                };
                x = tape.relu(x);
            }
            x = tape.maxpool2x2(x)?;
            if b == 2 {
                f_l = Some(x);
            }
        }
        let f_l = f_l.expect("at least three blocks");
        let f_g = if self.config.variant.kind.uses_global_context() {
            Some(tape.gap(x)?)
        } else {
            None
        };

        let kind = self.config.variant.kind;
        let mut xs = Vec::new();
        if let Some((w, b)) = self.layout.fragment_fc {
            for frag in segment_fragments(tape, f_l, self.config.variant.axis)? {
                xs.push(embed_fragment(tape, frag, vars[w], vars[b])?);
            }
        }
        let gru = self.layout.gru.map(|g| GruVars {
            w_z: vars[g[0]],
            w_r: vars[g[1]],
            w_h: vars[g[2]],
            u_z: vars[g[3]],
            u_r: vars[g[4]],
            u_h: vars[g[5]],
            b_z: vars[g[6]],
            b_r: vars[g[7]],
            b_h: vars[g[8]],
        });
        let feature = run_head(tape, kind, &xs, f_g, gru.as_ref())?;
        let (cw, cb) = self.layout.classifier;
        let logits = classify(tape, feature, vars[cw], vars[cb])?;
        Ok(Pass {
            output: NetOutput {
                f_l,
                f_g,
                feature,
                logits,
            },
            params: vars,
            moments,
        })
    }

    /// Folds train-mode batch moments into the running statistics.
    pub fn update_running_stats(&mut self, moments: &[BatchMoments<T>]) {
        let momentum = T::lit(BN_MOMENTUM);
        for (s, m) in self.bn.iter_mut().zip(moments) {
            s.update(m, momentum);
        }
    }
}

fn fill_normal<T: Real>(t: &mut Tensor<T>, std: f64, rng: &mut ChaCha8Rng) {
    let dist = Normal::new(0.0, std).expect("positive std");
    t.data_mut().iter_mut().for_each(|v| *v = T::lit(dist.sample(rng)));
}

fn fill_xavier<T: Real>(t: &mut Tensor<T>, rng: &mut ChaCha8Rng) {
    let (fan_in, fan_out) = (t.shape()[0], t.shape()[1]);
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
    t.data_mut().iter_mut().for_each(|v| *v = T::lit(dist.sample(rng)));
}

/// Stacks `[1, h, w, c]` images into one `[b, h, w, c]` batch.
pub fn stack_images<T: Real>(images: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Input("empty batch".into()))?;
    let mut shape = first.shape().to_vec();
    let mut data = Vec::with_capacity(first.len() * images.len());
    for img in images {
        if img.shape() != first.shape() {
            return Err(Error::dim("stack_images", "image elements", first.len(), img.len()));
        }
        data.extend_from_slice(img.data());
    }
    shape[0] = images.len() * first.shape()[0];
    Tensor::from_vec(&shape, data)
}
