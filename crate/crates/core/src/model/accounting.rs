//! Closed-form parameter and multiply-accumulate counts.
//!
//! One multiply-accumulate counts as one FLOP. Normalization, activation,
//! pooling and averaging are not counted.

use super::config::{BackboneConfig, VariantKind};
use super::head::N_FRAGMENTS;
use crate::imageproc::{CANVAS_HEIGHT, CANVAS_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopBreakdown {
    /// Per block; zero for blocks the variant does not execute.
    pub conv: [u64; 4],
    pub fragment_fc: u64,
    pub gru: u64,
    pub classifier: u64,
}

impl FlopBreakdown {
    pub fn total(&self) -> u64 {
        self.conv.iter().sum::<u64>() + self.fragment_fc + self.gru + self.classifier
    }

    pub fn conv_total(&self) -> u64 {
        self.conv.iter().sum()
    }
}

fn blocks(kind: VariantKind) -> usize {
    if kind.uses_global_context() {
        4
    } else {
        3
    }
}

/// Trainable parameters of the network a variant instantiates.
pub fn count_params(kind: VariantKind, n_writers: usize, backbone: &BackboneConfig) -> u64 {
    let ch = backbone.channels();
    let mut total = 0u64;
    let mut cin = 1u64;
    for &c in ch.iter().take(blocks(kind)) {
        let c = c as u64;
        // two convs with bias, two normalization layers with γ and β
        total += 9 * cin * c + c + 9 * c * c + c + 4 * c;
        cin = c;
    }
    let (local, dim) = (backbone.local_dim() as u64, backbone.feature_dim() as u64);
    if kind.uses_fragments() {
        total += local * dim + dim;
    }
    if kind.recurrent() {
        total += 6 * dim * dim + 3 * dim;
    }
    total + dim * n_writers as u64 + n_writers as u64
}

/// Multiply-accumulates of one 64×128 forward pass.
pub fn count_flops(kind: VariantKind, n_writers: usize, backbone: &BackboneConfig) -> FlopBreakdown {
    let ch = backbone.channels();
    let mut out = FlopBreakdown::default();
    let (mut h, mut w) = (CANVAS_HEIGHT as u64, CANVAS_WIDTH as u64);
    let mut cin = 1u64;
    for (b, &c) in ch.iter().enumerate().take(blocks(kind)) {
        let c = c as u64;
        out.conv[b] = h * w * c * 9 * cin + h * w * c * 9 * c;
        cin = c;
        h /= 2;
        w /= 2;
    }
    let (local, dim) = (backbone.local_dim() as u64, backbone.feature_dim() as u64);
    let steps = N_FRAGMENTS as u64;
    if kind.uses_fragments() {
        out.fragment_fc = steps * local * dim;
    }
    if kind.recurrent() {
        out.gru = steps * 6 * dim * dim;
    }
    out.classifier = dim * n_writers as u64;
    out
}
