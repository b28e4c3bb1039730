//! Fragment segmentation, fragment embedding, the recurrent head and the
//! writer classifier.

use alloc::vec::Vec;

use super::config::{Axis, VariantKind};
use crate::engine::{SliceAxis, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Spatial extent of `f_l` for a 64×128 input.
pub const LOCAL_HEIGHT: usize = 8;
pub const LOCAL_WIDTH: usize = 16;
pub const N_FRAGMENTS: usize = 8;
const VERTICAL_STEP: usize = 2;

/// Handles of the nine recurrent parameters. Matrices act on row vectors:
/// `x · W`.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
}

/// Cuts `f_l` (`[b, 8, 16, c]`) into eight slabs in reading order:
/// `1×16×c` rows top to bottom, or `8×2×c` column pairs left to right.
pub fn segment_fragments<T: Real>(tape: &mut Tape<T>, f_l: Var, axis: Axis) -> Result<Vec<Var>> {
    let shape = tape.shape(f_l);
    if shape.len() != 4 {
        return Err(Error::dim("segment_fragments", "rank", 4, shape.len()));
    }
    if shape[1] != LOCAL_HEIGHT {
        return Err(Error::dim("segment_fragments", "height", LOCAL_HEIGHT, shape[1]));
    }
    if shape[2] != LOCAL_WIDTH {
        return Err(Error::dim("segment_fragments", "width", LOCAL_WIDTH, shape[2]));
    }
    (0..N_FRAGMENTS)
        .map(|t| match axis {
            Axis::Horizontal => tape.slice(f_l, SliceAxis::Height, t, 1),
            Axis::Vertical => tape.slice(f_l, SliceAxis::Width, t * VERTICAL_STEP, VERTICAL_STEP),
        })
        .collect()
}

/// Average-pools a fragment and lifts it with the shared FC layer.
pub fn embed_fragment<T: Real>(tape: &mut Tape<T>, frag: Var, fc_weight: Var, fc_bias: Var) -> Result<Var> {
    let pooled = tape.gap(frag)?;
    tape.linear(pooled, fc_weight, Some(fc_bias))
}

/// One GRU update:
///
/// ```text
/// z = σ(x·W_z + f·U_z + b_z)
/// r = σ(x·W_r + f·U_r + b_r)
/// h = tanh(x·W_h + (r ⊛ f)·U_h + b_h)
/// f' = z ⊛ f + (1 − z) ⊛ h
/// ```
pub fn gru_step<T: Real>(tape: &mut Tape<T>, x: Var, f_prev: Var, p: &GruVars) -> Result<Var> {
    let gate = |tape: &mut Tape<T>, w: Var, u: Var, b: Var, state: Var| -> Result<Var> {
        let from_x = tape.linear(x, w, Some(b))?;
        let from_f = tape.linear(state, u, None)?;
        tape.add(from_x, from_f)
    };
    let z_pre = gate(tape, p.w_z, p.u_z, p.b_z, f_prev)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, p.w_r, p.u_r, p.b_r, f_prev)?;
    let r = tape.sigmoid(r_pre);
    let reset = tape.mul(r, f_prev)?;
    let h_pre = gate(tape, p.w_h, p.u_h, p.b_h, reset)?;
    let h = tape.tanh(h_pre);
    // z ⊛ f + (1 − z) ⊛ h = h + z ⊛ (f − h)
    let diff = tape.sub(f_prev, h)?;
    let gated = tape.mul(z, diff)?;
    tape.add(h, gated)
}

/// Computes the feature vector `f` of a variant from the fragment
/// embeddings `xs` (`[b, d]` each) and the optional global context.
pub fn run_head<T: Real>(
    tape: &mut Tape<T>,
    kind: VariantKind,
    xs: &[Var],
    f_g: Option<Var>,
    gru: Option<&GruVars>,
) -> Result<Var> {
    if kind.uses_global_context() && f_g.is_none() {
        return Err(Error::Config(alloc::format!(
            "variant {} needs the global context",
            kind.name()
        )));
    }
    match kind {
        VariantKind::Baseline => Ok(f_g.expect("checked above")),
        VariantKind::F => tape.sum(xs),
        _ => {
            let gru = gru.ok_or_else(|| Error::Config("recurrent variant without GRU parameters".into()))?;
            let first = *xs
                .first()
                .ok_or_else(|| Error::Input("empty fragment sequence".into()))?;
            let mut state = match f_g {
                Some(g) if kind.uses_global_context() => g,
                _ => {
                    let shape = tape.shape(first).to_vec();
                    tape.leaf(Tensor::zeros(&shape), false)
                }
            };
            let mut outputs = Vec::with_capacity(xs.len());
            for &x in xs {
                let mut next = gru_step(tape, x, state, gru)?;
                if kind.residual() {
                    next = tape.add(next, x)?;
                }
                outputs.push(next);
                state = next;
            }
            tape.sum(&outputs)
        }
    }
}

/// Linear writer classifier; softmax lives in the loss.
pub fn classify<T: Real>(tape: &mut Tape<T>, f: Var, weight: Var, bias: Var) -> Result<Var> {
    tape.linear(f, weight, Some(bias))
}
