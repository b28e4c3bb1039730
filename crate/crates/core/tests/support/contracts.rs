//! Shape, recurrence and loss checks shared with the acceptance suite.

use grrnn_core::engine::{label_smooth_loss, Tape, Var};
use grrnn_core::model::{
    run_head, segment_fragments, Axis, BackboneConfig, GruVars, Mode, ModelVariant, NetConfig, VariantKind,
    WriterNet,
};
use grrnn_core::Tensor;

use super::cases::uniform;

pub const CLOSED_FORM_TOLERANCE: f64 = 1e-12;
pub const UNIFORM_LOSS_TOLERANCE: f64 = 1e-12;
pub const HAND_LOSS_TOLERANCE: f64 = 1e-6;
/// The hand-computed N=4 loss as it is stated in the requirements.
pub const HAND_LOSS_STATED: f64 = 0.502617;

#[derive(Debug, Clone, PartialEq)]
pub struct Shapes {
    pub f_l: Vec<usize>,
    pub f_g: Vec<usize>,
    pub horizontal: Vec<Vec<usize>>,
    pub vertical: Vec<Vec<usize>>,
}

/// Shapes seen by a full-width FGRR forward pass on one blank image.
pub fn observed_shapes() -> Shapes {
    let config = NetConfig::new(
        ModelVariant::new(VariantKind::FGRR, Axis::Horizontal),
        BackboneConfig::default(),
        10,
    );
    let net = WriterNet::<f32>::new(config, 0).expect("network");
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[1, 64, 128, 1], 1.0f32), false);
    let pass = net.forward(&mut tape, x, Mode::Eval).expect("forward");
    let out = pass.output;
    let f_l = tape.shape(out.f_l).to_vec();
    let f_g = tape.shape(out.f_g.expect("global context")).to_vec();
    let mut split = |axis| -> Vec<Vec<usize>> {
        segment_fragments(&mut tape, out.f_l, axis)
            .expect("fragments")
            .iter()
            .map(|&v| tape.shape(v).to_vec())
            .collect()
    };
    let horizontal = split(Axis::Horizontal);
    let vertical = split(Axis::Vertical);
    Shapes {
        f_l,
        f_g,
        horizontal,
        vertical,
    }
}

pub fn expected_shapes() -> Shapes {
    Shapes {
        f_l: vec![1, 8, 16, 256],
        f_g: vec![1, 512],
        horizontal: vec![vec![1, 1, 16, 256]; 8],
        vertical: vec![vec![1, 8, 2, 256]; 8],
    }
}

fn zero_gru(tape: &mut Tape<f64>, d: usize) -> GruVars {
    let mut m = |shape: &[usize]| tape.leaf(Tensor::zeros(shape), false);
    GruVars {
        w_z: m(&[d, d]),
        w_r: m(&[d, d]),
        w_h: m(&[d, d]),
        u_z: m(&[d, d]),
        u_r: m(&[d, d]),
        u_h: m(&[d, d]),
        b_z: m(&[d]),
        b_r: m(&[d]),
        b_h: m(&[d]),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClosedForm {
    /// Largest |f^t − 0.5 f^{t−1}| for a zero-parameter GRU step.
    pub halving_error: f64,
    /// Largest deviation of the FGRR head output from the closed form.
    pub fgrr_error: f64,
    /// Largest deviation of FGRR − FGR from the residual closed form.
    pub residual_error: f64,
}

/// Runs zero-parameter heads on random fragments and compares them with
/// `f = Σ_t (0.5^t f_g + Σ_{k≤t} 0.5^{t−k} x_k)`.
pub fn gru_closed_form(seed: u64) -> ClosedForm {
    let (b, d) = (3, 7);
    let mut tape = Tape::<f64>::new();
    let gru = zero_gru(&mut tape, d);
    let xs_t: Vec<Tensor<f64>> = (0..8).map(|t| uniform(&[b, d], seed + t, -2.0, 2.0)).collect();
    let fg_t = uniform(&[b, d], seed + 100, -2.0, 2.0);
    let xs: Vec<Var> = xs_t.iter().map(|x| tape.leaf(x.clone(), false)).collect();
    let fg = tape.leaf(fg_t.clone(), false);

    let step = grrnn_core::model::gru_step(&mut tape, xs[0], fg, &gru).expect("gru step");
    let halving_error = tape
        .value(step)
        .data()
        .iter()
        .zip(fg_t.data())
        .map(|(a, f)| (a - 0.5 * f).abs())
        .fold(0.0, f64::max);

    let fgrr = run_head(&mut tape, VariantKind::FGRR, &xs, Some(fg), Some(&gru)).expect("fgrr");
    let fgr = run_head(&mut tape, VariantKind::FGR, &xs, Some(fg), Some(&gru)).expect("fgr");
    let mut fgrr_error: f64 = 0.0;
    let mut residual_error: f64 = 0.0;
    for i in 0..b * d {
        let mut want = 0.0;
        let mut want_fgr = 0.0;
        let mut residual = 0.0;
        for t in 1..=8 {
            let carried = 0.5f64.powi(t as i32) * fg_t.data()[i];
            let mut inner = 0.0;
            for k in 1..=t {
                inner += 0.5f64.powi((t - k) as i32) * xs_t[k - 1].data()[i];
            }
            want += carried + inner;
            want_fgr += carried;
            residual += inner;
        }
        let got = tape.value(fgrr).data()[i];
        let got_fgr = tape.value(fgr).data()[i];
        fgrr_error = fgrr_error.max((got - want).abs());
        residual_error = residual_error.max(((got - got_fgr) - residual).abs());
        // FGR with a zero GRU is pure decay of f_g.
        fgrr_error = fgrr_error.max((got_fgr - want_fgr).abs());
    }
    ClosedForm {
        halving_error,
        fgrr_error,
        residual_error,
    }
}

/// Largest |loss − ln N| for uniform logits at each N.
pub fn uniform_loss_errors(ns: &[usize]) -> Vec<(usize, f64)> {
    ns.iter()
        .map(|&n| {
            let loss = label_smooth_loss(&vec![0.25f64; n], n - 1, 0.1);
            (n, (loss - (n as f64).ln()).abs())
        })
        .collect()
}

/// Loss at N=4, ε=0.1, p=(0.7, 0.1, 0.1, 0.1), y=0, through the engine.
pub fn hand_case_loss() -> f64 {
    let logits: Vec<f64> = [0.7f64, 0.1, 0.1, 0.1].iter().map(|p| p.ln()).collect();
    let mut tape = Tape::<f64>::new();
    let l = tape.leaf(Tensor::from_vec(&[1, 4], logits).expect("logits"), false);
    let loss = tape.label_smoothing_loss(l, &[0], 0.1).expect("loss");
    tape.value(loss).data()[0]
}

/// Direct evaluation of the smoothed cross-entropy for the same case.
pub fn hand_case_reference() -> f64 {
    let p = [0.7f64, 0.1, 0.1, 0.1];
    let eps = 0.1;
    let q = |k: usize| if k == 0 { 1.0 - eps + eps / 4.0 } else { eps / 4.0 };
    (0..4).map(|k| -q(k) * p[k].ln()).sum()
}
