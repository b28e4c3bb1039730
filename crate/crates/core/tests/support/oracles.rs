//! Independent reference computations used as test oracles.

use grrnn_core::imageproc::RawImage;

/// Between-class variance of splitting `img` at `threshold`, computed by
/// scanning pixels: classes are `v < threshold` and the rest, and each
/// pixel contributes its 256-bin index `min(⌊256 v⌋, 255)`.
pub fn between_class_variance(img: &RawImage, threshold: f32) -> f64 {
    let (mut n0, mut n1, mut s0, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for &v in img.pixels() {
        let bin = ((v * 256.0).floor() as i64).clamp(0, 255) as f64;
        if v < threshold {
            n0 += 1.0;
            s0 += bin;
        } else {
            n1 += 1.0;
            s1 += bin;
        }
    }
    if n0 == 0.0 || n1 == 0.0 {
        return 0.0;
    }
    let d = s0 / n0 - s1 / n1;
    n0 * n1 * d * d
}

/// Largest between-class variance over every threshold `k / 256`.
pub fn exhaustive_otsu_max(img: &RawImage) -> f64 {
    (1..256)
        .map(|k| between_class_variance(img, k as f32 / 256.0))
        .fold(0.0, f64::max)
}

/// Writers sorted by a plain distance computation, ties by id.
pub fn brute_force_ranking(query: &[f64], models: &[(usize, Vec<f64>)]) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = models
        .iter()
        .map(|(w, m)| {
            let mut acc = 0.0;
            for i in 0..query.len() {
                acc += (query[i] - m[i]).powi(2);
            }
            (acc.sqrt(), *w)
        })
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    d.into_iter().map(|(_, w)| w).collect()
}

/// Textbook Adam with L2-coupled decay, one scalar at a time.
pub struct ReferenceAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl ReferenceAdam {
    pub fn new(n: usize) -> Self {
        ReferenceAdam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, decay: f64) {
        self.t += 1;
        for i in 0..theta.len() {
            let g = grad[i] + decay * theta[i];
            self.m[i] = 0.9 * self.m[i] + 0.1 * g;
            self.v[i] = 0.999 * self.v[i] + 0.001 * g * g;
            let mh = self.m[i] / (1.0 - 0.9f64.powi(self.t));
            let vh = self.v[i] / (1.0 - 0.999f64.powi(self.t));
            theta[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
}
