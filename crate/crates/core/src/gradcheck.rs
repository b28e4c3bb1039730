//! Central finite-difference checks of reverse-mode gradients.

use alloc::vec::Vec;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// First finite-difference step.
    pub step: f64,
    /// Extra attempts at a tenth of the previous step for coordinates that
    /// disagree, so that a ReLU or max-pool switch inside `[x − h, x + h]`
    /// does not masquerade as a wrong gradient.
    pub refinements: u32,
    /// Errors at or below this stop the refinement.
    pub accept: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Coordinates probed per input; `None` probes all of them.
    pub per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-6,
            refinements: 2,
            accept: 1e-6,
            floor: 1e-3,
            per_input: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    /// Coordinates that needed a smaller step.
    pub refined: usize,
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
}

impl GradReport {
    pub fn new() -> Self {
        GradReport {
            checked: 0,
            refined: 0,
            max_rel_error: 0.0,
            worst: None,
        }
    }

    /// Probes one coordinate. `f(v)` evaluates the objective with the
    /// coordinate set to `v`.
    pub fn probe(
        &mut self,
        cfg: &GradCheckConfig,
        input: usize,
        index: usize,
        x0: f64,
        analytic: f64,
        mut f: impl FnMut(f64) -> Result<f64>,
    ) -> Result<()> {
        let mut h = cfg.step;
        let mut best: Option<(f64, f64)> = None;
        for attempt in 0..=cfg.refinements {
            let numeric = (f(x0 + h)? - f(x0 - h)?) / (2.0 * h);
            let err = relative_error(analytic, numeric, cfg.floor);
            if best.is_none_or(|(e, _)| err < e) {
                best = Some((err, numeric));
            }
            if err <= cfg.accept {
                break;
            }
            if attempt == 0 && cfg.refinements > 0 {
                self.refined += 1;
            }
            h /= 10.0;
        }
        f(x0)?;
        let (err, numeric) = best.expect("at least one attempt");
        self.checked += 1;
        if self.worst.is_none() || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = Some(Mismatch {
                input,
                index,
                analytic,
                numeric,
            });
        }
        Ok(())
    }
}

impl Default for GradReport {
    fn default() -> Self {
        Self::new()
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Indices to probe in a tensor of `n` elements.
pub fn pick_indices<R: Rng>(n: usize, per_input: Option<usize>, rng: &mut R) -> Vec<usize> {
    match per_input {
        Some(k) if k < n => (0..k).map(|_| rng.random_range(0..n)).collect(),
        _ => (0..n).collect(),
    }
}

/// Compares the tape gradient of `Σ w ⊛ build(inputs)` with central
/// differences, where `w` is a fixed random weighting of the output.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], cfg: GradCheckConfig, build: F) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights: Option<Tensor<f64>> = None;
    let mut objective = |values: &[Tensor<f64>], with_grad: bool| -> Result<(f64, Vec<Option<Vec<f64>>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), with_grad)).collect();
        let out = build(&mut tape, &vars)?;
        let shape = tape.shape(out).to_vec();
        let w = weights.get_or_insert_with(|| Tensor::from_fn(&shape, |_| rng.random_range(0.5..1.5)));
        let w = tape.leaf(w.clone(), false);
        let weighted = tape.mul(out, w)?;
        let root = tape.reduce_sum(weighted);
        let value = tape.value(root).data()[0];
        if !with_grad {
            return Ok((value, Vec::new()));
        }
        tape.backward(root)?;
        Ok((value, vars.iter().map(|&v| tape.grad_slice(v).map(<[f64]>::to_vec)).collect()))
    };
    let (_, grads) = objective(inputs, true)?;
    let mut picker = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let mut report = GradReport::new();
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for idx in pick_indices(input.len(), cfg.per_input, &mut picker) {
            let analytic = grads[i].as_ref().map_or(0.0, |g| g[idx]);
            report.probe(&cfg, i, idx, input.data()[idx], analytic, |v| {
                probe[i].data_mut()[idx] = v;
                Ok(objective(&probe, false)?.0)
            })?;
        }
    }
    Ok(report)
}
