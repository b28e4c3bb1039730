//! 3×3 convolution, stride 1, zero padding 1, via im2col and GEMM.
//!
//! Input `[n, h, w, c_in]`, weight `[3, 3, c_in, c_out]`, bias `[c_out]`.
//! The weight tensor read as a `(9·c_in) × c_out` matrix matches the column
//! layout `[ky][kx][ci]` produced by [`im2col`].

use alloc::vec;
use alloc::vec::Vec;

use super::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::{gemm, Real};
use crate::tensor::Tensor;

impl<T: Real> Tape<T> {
    pub fn conv3x3(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 4 {
            return Err(Error::dim("conv3x3", "input rank", 4, xs.len()));
        }
        let [n, h, w, cin] = [xs[0], xs[1], xs[2], xs[3]];
        if h == 0 {
            return Err(Error::dim("conv3x3", "height", 1, 0));
        }
        if w == 0 {
            return Err(Error::dim("conv3x3", "width", 1, 0));
        }
        if ws.len() != 4 {
            return Err(Error::dim("conv3x3", "weight rank", 4, ws.len()));
        }
        if ws[0] != 3 {
            return Err(Error::dim("conv3x3", "kernel height", 3, ws[0]));
        }
        if ws[1] != 3 {
            return Err(Error::dim("conv3x3", "kernel width", 3, ws[1]));
        }
        if ws[2] != cin {
            return Err(Error::dim("conv3x3", "input channels", cin, ws[2]));
        }
        let cout = ws[3];
        let bs = self.shape(bias);
        if bs != [cout] {
            return Err(Error::dim("conv3x3", "bias length", cout, bs.iter().product()));
        }

        let x = self.value(input).data();
        let wdata = self.value(weight).data();
        let rows = n * h * w;
        let mut out = vec![T::zero(); rows * cout];
        let cache = if cin < SHIFTED_MIN_CHANNELS {
            let cols = im2col(x, n, h, w, cin);
            gemm(rows, 9 * cin, cout, &cols, false, wdata, false, &mut out, false);
            ConvCache::Columns(cols)
        } else {
            let padded = pad(x, n, h, w, cin);
            let mut acc = vec![T::zero(); n * (h + 2) * (w + 2) * cout];
            shifted_forward(&padded, wdata, n, h, w, cin, cout, &mut acc);
            crop(&acc, n, h, w, cout, &mut out);
            ConvCache::Padded(padded)
        };
        let bias_data = self.value(bias).data();
        for row in out.chunks_exact_mut(cout) {
            row.iter_mut().zip(bias_data).for_each(|(o, &b)| *o = *o + b);
        }

        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(
            Tensor::from_vec(&[n, h, w, cout], out)?,
            rg,
            Op::Conv3x3 {
                input,
                weight,
                bias,
                cache,
            },
        ))
    }
}

/// Below this input depth the convolution is lowered with im2col; above it,
/// as nine shifted products over a zero-padded copy of the input.
const SHIFTED_MIN_CHANNELS: usize = 8;

/// Forward intermediate kept for the backward pass.
pub(super) enum ConvCache<T> {
    Columns(Vec<T>),
    Padded(Vec<T>),
}

fn pad<T: Real>(x: &[T], n: usize, h: usize, w: usize, c: usize) -> Vec<T> {
    let (ph, pw) = (h + 2, w + 2);
    let mut out = vec![T::zero(); n * ph * pw * c];
    for b in 0..n {
        for y in 0..h {
            let src = ((b * h + y) * w) * c;
            let dst = ((b * ph + y + 1) * pw + 1) * c;
            out[dst..dst + w * c].copy_from_slice(&x[src..src + w * c]);
        }
    }
    out
}

/// Interior `[n, h, w, c]` of a padded-grid buffer.
fn crop<T: Real>(padded_grid: &[T], n: usize, h: usize, w: usize, c: usize, out: &mut [T]) {
    let (ph, pw) = (h + 2, w + 2);
    for b in 0..n {
        for y in 0..h {
            let src = ((b * ph + y) * pw) * c;
            let dst = ((b * h + y) * w) * c;
            out[dst..dst + w * c].copy_from_slice(&padded_grid[src..src + w * c]);
        }
    }
}

/// Inverse of [`crop`]: places `[n, h, w, c]` on a zeroed padded grid.
fn uncrop<T: Real>(x: &[T], n: usize, h: usize, w: usize, c: usize) -> Vec<T> {
    let (ph, pw) = (h + 2, w + 2);
    let mut grid = vec![T::zero(); n * ph * pw * c];
    for b in 0..n {
        for y in 0..h {
            let src = ((b * h + y) * w) * c;
            let dst = ((b * ph + y) * pw) * c;
            grid[dst..dst + w * c].copy_from_slice(&x[src..src + w * c]);
        }
    }
    grid
}

// Output position (b, y, x) lives at grid row p = (b·(h+2) + y)·(w+2) + x and
// reads the padded input at row p + ky·(w+2) + kx for tap (ky, kx). Rows with
// y ≥ h or x ≥ w are scratch and discarded by `crop`.
fn shifted_rows(n: usize, h: usize, w: usize) -> usize {
    n * (h + 2) * (w + 2) - 2 * (w + 2) - 2
}

#[allow(clippy::too_many_arguments)]
fn shifted_forward<T: Real>(
    padded: &[T],
    weight: &[T],
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    acc: &mut [T],
) {
    let rows = shifted_rows(n, h, w);
    for ky in 0..3 {
        for kx in 0..3 {
            let tap = ky * 3 + kx;
            let offset = ky * (w + 2) + kx;
            gemm(
                rows,
                cin,
                cout,
                &padded[offset * cin..],
                false,
                &weight[tap * cin * cout..(tap + 1) * cin * cout],
                false,
                &mut acc[..rows * cout],
                true,
            );
        }
    }
}

pub(super) fn im2col<T: Real>(x: &[T], n: usize, h: usize, w: usize, c: usize) -> Vec<T> {
    let k = 9 * c;
    let mut cols = vec![T::zero(); n * h * w * k];
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let row = ((b * h + y) * w + xx) * k;
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = ((b * h + sy as usize) * w + sx as usize) * c;
                        let dst = row + (ky * 3 + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], n: usize, h: usize, w: usize, c: usize) -> Vec<T> {
    let k = 9 * c;
    let mut x = vec![T::zero(); n * h * w * c];
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let row = ((b * h + y) * w + xx) * k;
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let dst = ((b * h + sy as usize) * w + sx as usize) * c;
                        let src = row + (ky * 3 + kx) * c;
                        x[dst..dst + c]
                            .iter_mut()
                            .zip(&cols[src..src + c])
                            .for_each(|(a, &v)| *a = *a + v);
                    }
                }
            }
        }
    }
    x
}

/// Emits gradients as `(which, grad)` with `which` 0 = input, 1 = weight,
/// 2 = bias.
pub(super) fn backward<T: Real>(
    in_shape: &[usize],
    weight: &[T],
    cache: &ConvCache<T>,
    dy: &[T],
    wants: [bool; 3],
    mut emit: impl FnMut(usize, Vec<T>),
) {
    let [n, h, w, cin] = [in_shape[0], in_shape[1], in_shape[2], in_shape[3]];
    let k = 9 * cin;
    let cout = dy.len() / (n * h * w);
    match cache {
        ConvCache::Columns(cols) => {
            let rows = n * h * w;
            if wants[0] {
                let mut dcols = vec![T::zero(); rows * k];
                gemm(rows, cout, k, dy, false, weight, true, &mut dcols, false);
                emit(0, col2im(&dcols, n, h, w, cin));
            }
            if wants[1] {
                let mut dw = vec![T::zero(); k * cout];
                gemm(k, rows, cout, cols, true, dy, false, &mut dw, false);
                emit(1, dw);
            }
        }
        ConvCache::Padded(padded) => {
            let rows = shifted_rows(n, h, w);
            let dy_grid = uncrop(dy, n, h, w, cout);
            let mut dpad = wants[0].then(|| vec![T::zero(); padded.len()]);
            let mut dw = wants[1].then(|| vec![T::zero(); k * cout]);
            for ky in 0..3 {
                for kx in 0..3 {
                    let tap = ky * 3 + kx;
                    let offset = ky * (w + 2) + kx;
                    let w_tap = &weight[tap * cin * cout..(tap + 1) * cin * cout];
                    if let Some(dpad) = dpad.as_mut() {
                        gemm(rows, cout, cin, &dy_grid, false, w_tap, true, &mut dpad[offset * cin..], true);
                    }
                    if let Some(dw) = dw.as_mut() {
                        gemm(
                            cin,
                            rows,
                            cout,
                            &padded[offset * cin..],
                            true,
                            &dy_grid,
                            false,
                            &mut dw[tap * cin * cout..(tap + 1) * cin * cout],
                            false,
                        );
                    }
                }
            }
            if let Some(dpad) = dpad {
                let mut dx = vec![T::zero(); n * h * w * cin];
                let (ph, pw) = (h + 2, w + 2);
                for b in 0..n {
                    for y in 0..h {
                        let src = ((b * ph + y + 1) * pw + 1) * cin;
                        let dst = ((b * h + y) * w) * cin;
                        dx[dst..dst + w * cin].copy_from_slice(&dpad[src..src + w * cin]);
                    }
                }
                emit(0, dx);
            }
            if let Some(dw) = dw {
                emit(1, dw);
            }
        }
    }
    if wants[2] {
        let mut db = vec![T::zero(); cout];
        for row in dy.chunks_exact(cout) {
            db.iter_mut().zip(row).for_each(|(a, &r)| *a = *a + r);
        }
        emit(2, db);
    }
}
