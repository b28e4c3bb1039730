//! Spatial reductions: 2×2 max pooling, global average pooling and slab
//! slicing, all over `[n, h, w, c]` maps.

use alloc::vec;
use alloc::vec::Vec;

use super::{Op, SliceAxis, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

fn dims4(op: &'static str, shape: &[usize]) -> Result<[usize; 4]> {
    if shape.len() != 4 {
        return Err(Error::dim(op, "rank", 4, shape.len()));
    }
    Ok([shape[0], shape[1], shape[2], shape[3]])
}

impl<T: Real> Tape<T> {
    /// 2×2 window, stride 2. Ties route the gradient to the first element in
    /// row-major window order.
    pub fn maxpool2x2(&mut self, input: Var) -> Result<Var> {
        let [n, h, w, c] = dims4("maxpool2x2", self.shape(input))?;
        if h % 2 != 0 {
            return Err(Error::dim("maxpool2x2", "height (must be even)", h + 1, h));
        }
        if w % 2 != 0 {
            return Err(Error::dim("maxpool2x2", "width (must be even)", w + 1, w));
        }
        let (oh, ow) = (h / 2, w / 2);
        let x = self.value(input).data();
        let mut out = vec![T::zero(); n * oh * ow * c];
        let mut argmax = vec![0u32; out.len()];
        for b in 0..n {
            for y in 0..oh {
                for xx in 0..ow {
                    let o = ((b * oh + y) * ow + xx) * c;
                    for ch in 0..c {
                        let mut best = T::neg_infinity();
                        let mut best_idx = 0usize;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let idx = ((b * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch;
                                if x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out[o + ch] = best;
                        argmax[o + ch] = best_idx as u32;
                    }
                }
            }
        }
        let rg = self.requires_grad(input);
        Ok(self.push(Tensor::from_vec(&[n, oh, ow, c], out)?, rg, Op::MaxPool2 { input, argmax }))
    }

    /// Per-channel spatial mean: `[n, h, w, c] -> [n, c]`.
    pub fn gap(&mut self, input: Var) -> Result<Var> {
        let [n, h, w, c] = dims4("gap", self.shape(input))?;
        if h * w == 0 {
            return Err(Error::dim("gap", "spatial extent", 1, 0));
        }
        let x = self.value(input).data();
        let inv = T::one() / T::lit((h * w) as f64);
        let mut out = vec![T::zero(); n * c];
        for b in 0..n {
            let acc = &mut out[b * c..(b + 1) * c];
            for px in x[b * h * w * c..(b + 1) * h * w * c].chunks_exact(c) {
                acc.iter_mut().zip(px).for_each(|(a, &v)| *a = *a + v);
            }
            acc.iter_mut().for_each(|a| *a = *a * inv);
        }
        let rg = self.requires_grad(input);
        Ok(self.push(Tensor::from_vec(&[n, c], out)?, rg, Op::Gap { input }))
    }

    /// Contiguous slab `[start, start + len)` along the height or width axis.
    pub fn slice(&mut self, input: Var, axis: SliceAxis, start: usize, len: usize) -> Result<Var> {
        let [n, h, w, c] = dims4("slice", self.shape(input))?;
        let (extent, name) = match axis {
            SliceAxis::Height => (h, "height"),
            SliceAxis::Width => (w, "width"),
        };
        if len == 0 || start + len > extent {
            return Err(Error::dim("slice", name, extent, start + len));
        }
        let (oh, ow) = match axis {
            SliceAxis::Height => (len, w),
            SliceAxis::Width => (h, len),
        };
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(n * oh * ow * c);
        for b in 0..n {
            for y in 0..oh {
                let (sy, sx) = match axis {
                    SliceAxis::Height => (start + y, 0),
                    SliceAxis::Width => (y, start),
                };
                let base = ((b * h + sy) * w + sx) * c;
                out.extend_from_slice(&x[base..base + ow * c]);
            }
        }
        let rg = self.requires_grad(input);
        Ok(self.push(Tensor::from_vec(&[n, oh, ow, c], out)?, rg, Op::Slice { input, axis, start }))
    }
}

pub(super) fn maxpool_backward<T: Real>(in_len: usize, argmax: &[u32], dy: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); in_len];
    for (&i, &d) in argmax.iter().zip(dy) {
        dx[i as usize] = dx[i as usize] + d;
    }
    dx
}

pub(super) fn gap_backward<T: Real>(in_shape: &[usize], dy: &[T]) -> Vec<T> {
    let [n, h, w, c] = [in_shape[0], in_shape[1], in_shape[2], in_shape[3]];
    let inv = T::one() / T::lit((h * w) as f64);
    let mut dx = Vec::with_capacity(n * h * w * c);
    for b in 0..n {
        let g = &dy[b * c..(b + 1) * c];
        for _ in 0..h * w {
            dx.extend(g.iter().map(|&v| v * inv));
        }
    }
    dx
}

pub(super) fn slice_backward<T: Real>(
    in_shape: &[usize],
    out_shape: &[usize],
    axis: SliceAxis,
    start: usize,
    dy: &[T],
) -> Vec<T> {
    let [n, h, w, c] = [in_shape[0], in_shape[1], in_shape[2], in_shape[3]];
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let mut dx = vec![T::zero(); n * h * w * c];
    let mut src = 0;
    for b in 0..n {
        for y in 0..oh {
            let (sy, sx) = match axis {
                SliceAxis::Height => (start + y, 0),
                SliceAxis::Width => (y, start),
            };
            let base = ((b * h + sy) * w + sx) * c;
            dx[base..base + ow * c].copy_from_slice(&dy[src..src + ow * c]);
            src += ow * c;
        }
    }
    dx
}
