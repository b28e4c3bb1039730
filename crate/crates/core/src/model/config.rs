#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};

/// How the final feature vector is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    /// `f = f_g`: the plain CNN with global average pooling.
    Baseline,
    /// `f = Σ x_t`: fragments only.
    F,
    /// GRU over fragments from a zero state.
    FR,
    /// Residual GRU over fragments from a zero state.
    FRR,
    /// GRU over fragments starting from the global context.
    FGR,
    /// Residual GRU over fragments starting from the global context.
    FGRR,
}

impl VariantKind {
    pub const ALL: [VariantKind; 6] = [
        VariantKind::Baseline,
        VariantKind::F,
        VariantKind::FR,
        VariantKind::FRR,
        VariantKind::FGR,
        VariantKind::FGRR,
    ];

    /// Whether block 4 runs and `f_g` exists.
    pub fn uses_global_context(self) -> bool {
        matches!(self, VariantKind::Baseline | VariantKind::FGR | VariantKind::FGRR)
    }

    pub fn uses_fragments(self) -> bool {
        self != VariantKind::Baseline
    }

    pub fn recurrent(self) -> bool {
        matches!(
            self,
            VariantKind::FR | VariantKind::FRR | VariantKind::FGR | VariantKind::FGRR
        )
    }

    pub fn residual(self) -> bool {
        matches!(self, VariantKind::FRR | VariantKind::FGRR)
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Baseline => "baseline",
            VariantKind::F => "f",
            VariantKind::FR => "fr",
            VariantKind::FRR => "frr",
            VariantKind::FGR => "fgr",
            VariantKind::FGRR => "fgrr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Direction fragments are cut from the local feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Row bands, top to bottom.
    Horizontal,
    /// Two-column bands, left to right.
    Vertical,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Horizontal => "horizontal",
            Axis::Vertical => "vertical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "horizontal" | "h" => Ok(Axis::Horizontal),
            "vertical" | "v" => Ok(Axis::Vertical),
            _ => Err(Error::Config(format!("unknown axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelVariant {
    pub kind: VariantKind,
    pub axis: Axis,
}

impl ModelVariant {
    pub fn new(kind: VariantKind, axis: Axis) -> Self {
        ModelVariant { kind, axis }
    }
}

/// Channel plan of the four convolutional blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneConfig {
    pub plan: [usize; 4],
    pub width: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            plan: [64, 128, 256, 512],
            width: 1.0,
        }
    }
}

impl BackboneConfig {
    pub fn with_width(width: f64) -> Self {
        BackboneConfig {
            width,
            ..Self::default()
        }
    }

    /// Effective channel counts after the width multiplier.
    pub fn channels(&self) -> [usize; 4] {
        self.plan
            .map(|c| ((c as f64 * self.width).round() as usize).max(1))
    }

    /// Depth of `f_l`.
    pub fn local_dim(&self) -> usize {
        self.channels()[2]
    }

    /// Length of `f_g`, the fragment embeddings and the recurrent state.
    pub fn feature_dim(&self) -> usize {
        self.channels()[3]
    }
}

/// Everything needed to instantiate a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub variant: ModelVariant,
    pub backbone: BackboneConfig,
    pub n_writers: usize,
}

impl NetConfig {
    pub fn new(variant: ModelVariant, backbone: BackboneConfig, n_writers: usize) -> Self {
        NetConfig {
            variant,
            backbone,
            n_writers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_writers < 2 {
            return Err(Error::Config(format!("need at least 2 writers, got {}", self.n_writers)));
        }
        if !(self.backbone.width.is_finite() && self.backbone.width > 0.0) {
            return Err(Error::Config(format!("width multiplier {} must be positive", self.backbone.width)));
        }
        Ok(())
    }

    /// Blocks executed by this variant.
    pub fn n_blocks(&self) -> usize {
        if self.variant.kind.uses_global_context() {
            4
        } else {
            3
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{}-{} width={} writers={}",
            self.variant.kind.name(),
            self.variant.axis.name(),
            self.backbone.width,
            self.n_writers
        )
    }
}
