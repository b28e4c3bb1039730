//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! append a node holding the output value, the handles of their inputs and
//! whatever forward intermediates the backward pass needs. [`Tape::backward`]
//! then walks the nodes in exact reverse order of execution.
//!
//! Only the operations the writer-identification network uses are provided.
//! There is no broadcasting beyond the row-vector bias of [`Tape::linear`].

mod conv;
mod loss;
mod norm;
mod pool;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::{gemm, Real};
use crate::tensor::Tensor;

pub use loss::{label_smooth_loss, log_softmax};
pub use norm::{BatchMoments, BnStats, BN_EPSILON, BN_MOMENTUM};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which fragment axis a slice is taken along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    Height,
    Width,
}

enum Op<T> {
    Leaf,
    Conv3x3 {
        input: Var,
        weight: Var,
        bias: Var,
        cache: conv::ConvCache<T>,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<u32>,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Gap {
        input: Var,
    },
    Slice {
        input: Var,
        axis: SliceAxis,
        start: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Vec<Var>),
    ReduceSum(Var),
    LabelSmoothing {
        logits: Var,
        labels: Vec<usize>,
        epsilon: T,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Record of one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward root with respect to `v`, if `v` was
    /// reached.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::from_vec(node.value.shape(), g.clone()).expect("grad shape"))
    }

    pub fn grad_slice(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() {
            return Err(Error::dim(op, "rank", sa.len(), sb.len()));
        }
        for (axis, (x, y)) in sa.iter().zip(sb).enumerate() {
            if x != y {
                return Err(Error::dim(op, alloc::format!("axis {axis}"), *x, *y));
            }
        }
        Ok(())
    }

    fn unary(&mut self, input: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let x = &self.nodes[input.0].value;
        let out = Tensor::from_vec(x.shape(), x.data().iter().map(|&v| f(v)).collect())
            .expect("same shape");
        let rg = self.nodes[input.0].requires_grad;
        self.push(out, rg, op)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (xa, xb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = xa.data().iter().zip(xb.data()).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::from_vec(xa.shape(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, rg, op))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |p, q| p - q, Op::Sub(a, b))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |p, q| p * q, Op::Mul(a, b))
    }

    /// Sum of a non-empty sequence of same-shaped values.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Input("sum of an empty sequence".into()))?;
        for &x in &xs[1..] {
            self.same_shape("sum", first, x)?;
        }
        let mut acc = self.nodes[first.0].value.clone();
        for &x in &xs[1..] {
            for (a, b) in acc.data_mut().iter_mut().zip(self.nodes[x.0].value.data()) {
                *a = *a + *b;
            }
        }
        let rg = self.any_grad(xs);
        Ok(self.push(acc, rg, Op::Sum(xs.to_vec())))
    }

    /// Sum of all elements as a single-element tensor.
    pub fn reduce_sum(&mut self, x: Var) -> Var {
        let total = self.nodes[x.0].value.sum();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(total), rg, Op::ReduceSum(x))
    }

    /// Affine map of each row: `input [b, n] · weight [n, m] + bias [m]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(input);
        let ws = self.shape(weight);
        if xs.len() != 2 {
            return Err(Error::dim("linear", "input rank", 2, xs.len()));
        }
        if ws.len() != 2 {
            return Err(Error::dim("linear", "weight rank", 2, ws.len()));
        }
        let (b, n, m) = (xs[0], xs[1], ws[1]);
        if ws[0] != n {
            return Err(Error::dim("linear", "weight rows", n, ws[0]));
        }
        if let Some(bv) = bias {
            let bs = self.shape(bv);
            if bs != [m] {
                return Err(Error::dim("linear", "bias length", m, bs.iter().product()));
            }
        }
        let mut out = vec![T::zero(); b * m];
        if let Some(bv) = bias {
            let bias_data = self.nodes[bv.0].value.data();
            for row in out.chunks_exact_mut(m) {
                row.copy_from_slice(bias_data);
            }
        }
        gemm(
            b,
            n,
            m,
            self.nodes[input.0].value.data(),
            false,
            self.nodes[weight.0].value.data(),
            false,
            &mut out,
            bias.is_some(),
        );
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            Tensor::from_vec(&[b, m], out)?,
            rg,
            Op::Linear {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Runs reverse accumulation from a single-element `root`.
    ///
    /// Gradients from earlier calls are cleared first.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::dim("backward", "root element count", 1, self.nodes[root.0].value.len()));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        self.nodes[root.0].grad = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Some(out_grad) = node.grad.as_deref() else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let contributions = backward_op(&node.op, &node.value, out_grad, before);
            for (var, g) in contributions {
                let target = &mut before[var.0];
                if !target.requires_grad {
                    continue;
                }
                match &mut target.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }
}

/// Logistic function, stable for large negative arguments.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn backward_op<T: Real>(op: &Op<T>, out: &Tensor<T>, dy: &[T], nodes: &[Node<T>]) -> Vec<(Var, Vec<T>)> {
    let wants = |v: Var| nodes[v.0].requires_grad;
    let val = |v: Var| &nodes[v.0].value;
    let mut grads = Vec::new();
    match op {
        Op::Leaf => {}
        Op::Relu(x) => {
            let g = val(*x)
                .data()
                .iter()
                .zip(dy)
                .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                .collect();
            grads.push((*x, g));
        }
        Op::Sigmoid(x) => {
            let g = out
                .data()
                .iter()
                .zip(dy)
                .map(|(&s, &d)| d * s * (T::one() - s))
                .collect();
            grads.push((*x, g));
        }
        Op::Tanh(x) => {
            let g = out
                .data()
                .iter()
                .zip(dy)
                .map(|(&t, &d)| d * (T::one() - t * t))
                .collect();
            grads.push((*x, g));
        }
        Op::Scale(x, s) => grads.push((*x, dy.iter().map(|&d| d * *s).collect())),
        Op::Add(a, b) => {
            grads.push((*a, dy.to_vec()));
            grads.push((*b, dy.to_vec()));
        }
        Op::Sub(a, b) => {
            grads.push((*a, dy.to_vec()));
            grads.push((*b, dy.iter().map(|&d| -d).collect()));
        }
        Op::Mul(a, b) => {
            if wants(*a) {
                grads.push((*a, dy.iter().zip(val(*b).data()).map(|(&d, &q)| d * q).collect()));
            }
            if wants(*b) {
                grads.push((*b, dy.iter().zip(val(*a).data()).map(|(&d, &p)| d * p).collect()));
            }
        }
        Op::Sum(xs) => {
            for &x in xs {
                grads.push((x, dy.to_vec()));
            }
        }
        Op::ReduceSum(x) => grads.push((*x, vec![dy[0]; val(*x).len()])),
        Op::Linear {
            input,
            weight,
            bias,
        } => {
            let xs = val(*input).shape();
            let (b, n) = (xs[0], xs[1]);
            let m = val(*weight).shape()[1];
            if wants(*input) {
                let mut dx = vec![T::zero(); b * n];
                gemm(b, m, n, dy, false, val(*weight).data(), true, &mut dx, false);
                grads.push((*input, dx));
            }
            if wants(*weight) {
                let mut dw = vec![T::zero(); n * m];
                gemm(n, b, m, val(*input).data(), true, dy, false, &mut dw, false);
                grads.push((*weight, dw));
            }
            if let Some(bv) = bias {
                if wants(*bv) {
                    let mut db = vec![T::zero(); m];
                    for row in dy.chunks_exact(m) {
                        db.iter_mut().zip(row).for_each(|(a, &r)| *a = *a + r);
                    }
                    grads.push((*bv, db));
                }
            }
        }
        Op::Conv3x3 {
            input,
            weight,
            bias,
            cache,
        } => conv::backward(
            val(*input).shape(),
            val(*weight).data(),
            cache,
            dy,
            [wants(*input), wants(*weight), wants(*bias)],
            |which, g| grads.push(([*input, *weight, *bias][which], g)),
        ),
        Op::MaxPool2 { input, argmax } => {
            grads.push((*input, pool::maxpool_backward(val(*input).len(), argmax, dy)));
        }
        Op::Gap { input } => grads.push((*input, pool::gap_backward(val(*input).shape(), dy))),
        Op::Slice { input, axis, start } => {
            grads.push((
                *input,
                pool::slice_backward(val(*input).shape(), out.shape(), *axis, *start, dy),
            ));
        }
        Op::BatchNorm {
            input,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => {
            let (dx, dgamma, dbeta) =
                norm::backward(val(*gamma).data(), xhat, inv_std, *batch_stats, dy, wants(*input));
            if let Some(dx) = dx {
                grads.push((*input, dx));
            }
            grads.push((*gamma, dgamma));
            grads.push((*beta, dbeta));
        }
        Op::LabelSmoothing {
            logits,
            labels,
            epsilon,
            probs,
        } => grads.push((*logits, loss::backward(labels, *epsilon, probs, dy[0]))),
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_reference_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap(), false);
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(s).data()[1], 0.5);
        let t = tape.tanh(x);
        assert_eq!(tape.value(t).data()[1], 0.0);
    }

    #[test]
    fn sigmoid_and_tanh_stay_finite_at_large_magnitude() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[4], vec![-1e3, -700.0, 700.0, 1e3]).unwrap(), true);
        let s = tape.sigmoid(x);
        let t = tape.tanh(x);
        let st = tape.add(s, t).unwrap();
        let total = tape.sum(&[st]).unwrap();
        assert!(tape.value(total).all_finite());
        assert_eq!(tape.value(s).data()[0], 0.0);
        assert_eq!(tape.value(s).data()[3], 1.0);
        assert_eq!(tape.value(t).data()[0], -1.0);
    }

    #[test]
    fn elementwise_shape_mismatch_is_reported() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]), false);
        let b = tape.leaf(Tensor::zeros(&[2, 4]), false);
        match tape.add(a, b).unwrap_err() {
            Error::Dimension { axis, expected, got, .. } => {
                assert_eq!(axis, "axis 1");
                assert_eq!((expected, got), (3, 4));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn linear_identity_and_zero_input() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 3], vec![1.5, -2.0, 0.25]).unwrap(), false);
        let eye = tape.leaf(Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }), false);
        let zero_bias = tape.leaf(Tensor::zeros(&[3]), false);
        let y = tape.linear(x, eye, Some(zero_bias)).unwrap();
        assert_eq!(tape.value(y).data(), &[1.5, -2.0, 0.25]);

        let z = tape.leaf(Tensor::zeros(&[1, 3]), false);
        let w = tape.leaf(Tensor::from_fn(&[3, 2], |i| i as f64 + 1.0), false);
        let b = tape.leaf(Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap(), false);
        let y = tape.linear(z, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -0.5]);

        let bad = tape.leaf(Tensor::zeros(&[4, 2]), false);
        assert!(matches!(
            tape.linear(z, bad, None),
            Err(Error::Dimension { expected: 3, got: 4, .. })
        ));
    }

    #[test]
    fn backward_reaches_every_differentiable_leaf() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(&[2], vec![0.3, -0.2]).unwrap(), true);
        let b = tape.leaf(Tensor::from_vec(&[2], vec![1.1, 0.7]).unwrap(), true);
        let c = tape.leaf(Tensor::from_vec(&[2], vec![5.0, 5.0]).unwrap(), false);
        let ab = tape.mul(a, b).unwrap();
        let abc = tape.add(ab, c).unwrap();
        let aa = tape.mul(a, a).unwrap();
        let s = tape.sum(&[abc, aa]).unwrap();
        let s = tape.reduce_sum(s);
        tape.backward(s).unwrap();
        // d/da (a*b + a*a) = b + 2a
        assert_eq!(tape.grad_slice(a).unwrap(), &[1.1 + 0.6, 0.7 - 0.4]);
        assert_eq!(tape.grad_slice(b).unwrap(), &[0.3, -0.2]);
        assert!(tape.grad_slice(c).is_none());
    }
}
