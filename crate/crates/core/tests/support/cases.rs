//! Gradient-check cases shared by the core tests and the acceptance suite.

use grrnn_core::engine::{BnStats, SliceAxis, Tape, Var};
use grrnn_core::gradcheck::{check_gradients, GradCheckConfig, GradReport};
use grrnn_core::model::{
    gru_step, stack_images, Axis, BackboneConfig, GruVars, Mode, ModelVariant, NetConfig, VariantKind, WriterNet,
};
use grrnn_core::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const OP_TOLERANCE: f64 = 1e-5;
pub const GRAPH_TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-6;
pub const REFINEMENTS: u32 = 2;
pub const FLOOR: f64 = 1e-3;

pub fn uniform(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Magnitudes in `[0.2, 1.5]` with random signs, clear of the ReLU kink.
pub fn off_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.2..1.5);
        if rng.random::<bool>() { m } else { -m }
    })
}

fn cfg(seed: u64) -> GradCheckConfig {
    GradCheckConfig {
        step: STEP,
        refinements: REFINEMENTS,
        accept: 1e-6,
        floor: FLOOR,
        per_input: None,
        seed,
    }
}

fn run(inputs: Vec<Tensor<f64>>, f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>) -> GradReport {
    check_gradients(&inputs, cfg(11), f).expect("gradient check runs")
}

/// Every differentiable engine op, checked in isolation.
pub fn op_cases() -> Vec<(&'static str, GradReport)> {
    let x4 = || uniform(&[2, 4, 6, 3], 1, -1.0, 1.0);
    vec![
        (
            "conv3x3 (im2col)",
            run(
                vec![x4(), uniform(&[3, 3, 3, 4], 2, -0.5, 0.5), uniform(&[4], 3, -0.5, 0.5)],
                |t, v| t.conv3x3(v[0], v[1], v[2]),
            ),
        ),
        (
            "conv3x3 (shifted)",
            run(
                vec![
                    uniform(&[2, 4, 5, 9], 4, -1.0, 1.0),
                    uniform(&[3, 3, 9, 5], 5, -0.5, 0.5),
                    uniform(&[5], 6, -0.5, 0.5),
                ],
                |t, v| t.conv3x3(v[0], v[1], v[2]),
            ),
        ),
        ("maxpool2x2", run(vec![x4()], |t, v| t.maxpool2x2(v[0]))),
        (
            "batchnorm (train)",
            run(
                vec![uniform(&[3, 2, 4, 3], 7, -2.0, 2.0), uniform(&[3], 8, 0.5, 1.5), uniform(&[3], 9, -0.5, 0.5)],
                |t, v| Ok(t.batchnorm_train(v[0], v[1], v[2])?.0),
            ),
        ),
        (
            "batchnorm (eval)",
            run(
                vec![uniform(&[3, 2, 4, 3], 10, -2.0, 2.0), uniform(&[3], 11, 0.5, 1.5), uniform(&[3], 12, -0.5, 0.5)],
                |t, v| {
                    let stats = BnStats {
                        mean: vec![0.1, -0.2, 0.3],
                        var: vec![0.5, 1.5, 2.0],
                    };
                    t.batchnorm_eval(v[0], v[1], v[2], &stats)
                },
            ),
        ),
        (
            "linear",
            run(
                vec![uniform(&[3, 5], 13, -1.0, 1.0), uniform(&[5, 4], 14, -1.0, 1.0), uniform(&[4], 15, -1.0, 1.0)],
                |t, v| t.linear(v[0], v[1], Some(v[2])),
            ),
        ),
        (
            "linear (no bias)",
            run(vec![uniform(&[3, 5], 16, -1.0, 1.0), uniform(&[5, 4], 17, -1.0, 1.0)], |t, v| {
                t.linear(v[0], v[1], None)
            }),
        ),
        ("global average pool", run(vec![x4()], |t, v| t.gap(v[0]))),
        ("slice (height)", run(vec![x4()], |t, v| t.slice(v[0], SliceAxis::Height, 1, 2))),
        ("slice (width)", run(vec![x4()], |t, v| t.slice(v[0], SliceAxis::Width, 2, 3))),
        ("relu", run(vec![off_zero(&[4, 5], 18)], |t, v| Ok(t.relu(v[0])))),
        ("sigmoid", run(vec![uniform(&[4, 5], 19, -4.0, 4.0)], |t, v| Ok(t.sigmoid(v[0])))),
        ("tanh", run(vec![uniform(&[4, 5], 20, -3.0, 3.0)], |t, v| Ok(t.tanh(v[0])))),
        ("scale", run(vec![uniform(&[4, 5], 21, -1.0, 1.0)], |t, v| Ok(t.scale(v[0], -2.5)))),
        (
            "add",
            run(vec![uniform(&[4, 5], 22, -1.0, 1.0), uniform(&[4, 5], 23, -1.0, 1.0)], |t, v| t.add(v[0], v[1])),
        ),
        (
            "sub",
            run(vec![uniform(&[4, 5], 24, -1.0, 1.0), uniform(&[4, 5], 25, -1.0, 1.0)], |t, v| t.sub(v[0], v[1])),
        ),
        (
            "mul",
            run(vec![uniform(&[4, 5], 26, -1.0, 1.0), uniform(&[4, 5], 27, -1.0, 1.0)], |t, v| t.mul(v[0], v[1])),
        ),
        (
            "sum",
            run(
                vec![uniform(&[3, 4], 28, -1.0, 1.0), uniform(&[3, 4], 29, -1.0, 1.0), uniform(&[3, 4], 30, -1.0, 1.0)],
                |t, v| t.sum(v),
            ),
        ),
        ("reduce_sum", run(vec![uniform(&[3, 4], 31, -1.0, 1.0)], |t, v| Ok(t.reduce_sum(v[0])))),
        (
            "label smoothing loss",
            run(vec![uniform(&[3, 5], 32, -2.0, 2.0)], |t, v| t.label_smoothing_loss(v[0], &[0, 4, 2], 0.1)),
        ),
    ]
}

/// One GRU update with random parameters.
pub fn gru_case() -> GradReport {
    let d = 6;
    let mut inputs = vec![uniform(&[2, d], 40, -1.0, 1.0), uniform(&[2, d], 41, -1.0, 1.0)];
    for s in 0..6 {
        inputs.push(uniform(&[d, d], 42 + s, -0.6, 0.6));
    }
    for s in 0..3 {
        inputs.push(uniform(&[d], 50 + s, -0.3, 0.3));
    }
    run(inputs, |t, v| {
        let g = GruVars {
            w_z: v[2],
            w_r: v[3],
            w_h: v[4],
            u_z: v[5],
            u_r: v[6],
            u_h: v[7],
            b_z: v[8],
            b_r: v[9],
            b_h: v[10],
        };
        gru_step(t, v[0], v[1], &g)
    })
}

pub const GRAPH_WIDTH: f64 = 0.25;
pub const GRAPH_WRITERS: usize = 5;
pub const GRAPH_COORDS_PER_TENSOR: usize = 3;

fn graph_loss(net: &WriterNet<f64>, images: &Tensor<f64>, labels: &[usize], with_grad: bool) -> (f64, Vec<Option<Vec<f64>>>) {
    let mut tape = Tape::new();
    let x = tape.leaf(images.clone(), false);
    let pass = net.forward(&mut tape, x, Mode::Train).expect("forward");
    let loss = tape.label_smoothing_loss(pass.output.logits, labels, 0.1).expect("loss");
    let value = tape.value(loss).data()[0];
    if !with_grad {
        return (value, Vec::new());
    }
    tape.backward(loss).expect("backward");
    (value, pass.params.iter().map(|&v| tape.grad_slice(v).map(<[f64]>::to_vec)).collect())
}

/// Image → loss through the whole network (train-mode batchnorm) at
/// reduced width, probing a few coordinates of every parameter tensor.
pub fn full_graph_case(kind: VariantKind, axis: Axis) -> GradReport {
    let config = NetConfig::new(ModelVariant::new(kind, axis), BackboneConfig::with_width(GRAPH_WIDTH), GRAPH_WRITERS);
    let mut net = WriterNet::<f64>::new(config, 5).expect("network");
    // Move the classifier off its near-zero initialization so every layer
    // receives gradients well above the floor.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let normal = Normal::new(0.0, 0.3).unwrap();
    for v in net.param_mut("classifier.weight").unwrap().data_mut() {
        *v = normal.sample(&mut rng);
    }
    let images = stack_images(&[uniform(&[1, 64, 128, 1], 60, 0.0, 1.0), uniform(&[1, 64, 128, 1], 61, 0.0, 1.0)])
        .expect("batch");
    let labels = [1, 3];
    let (_, grads) = graph_loss(&net, &images, &labels, true);
    let mut report = GradReport::new();
    let check = cfg(0);
    let mut picker = ChaCha8Rng::seed_from_u64(62);
    for p in 0..net.params().len() {
        let n = net.params()[p].value.len();
        for _ in 0..GRAPH_COORDS_PER_TENSOR {
            let idx = picker.random_range(0..n);
            let x0 = net.params()[p].value.data()[idx];
            let analytic = grads[p].as_ref().map_or(0.0, |g| g[idx]);
            report
                .probe(&check, p, idx, x0, analytic, |v| {
                    net.params_mut()[p].value.data_mut()[idx] = v;
                    Ok(graph_loss(&net, &images, &labels, false).0)
                })
                .expect("probe");
        }
    }
    report
}
