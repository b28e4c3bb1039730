//! Run configuration: defaults, `key=value` files and their echo.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use grrnn_core::imageproc::ImageMode;
use grrnn_core::model::{Axis, BackboneConfig, ModelVariant, NetConfig, VariantKind};
use grrnn_core::train::TrainConfig;

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: VariantKind,
    pub axis: Axis,
    pub mode: ImageMode,
    pub width: f64,
    pub train: TrainConfig,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: VariantKind::FGRR,
            axis: Axis::Horizontal,
            mode: ImageMode::Gray,
            width: 1.0,
            train: TrainConfig::default(),
            manifest: None,
            out: None,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 15] = [
        "variant",
        "axis",
        "mode",
        "width",
        "epochs",
        "batch",
        "lr",
        "halve_every",
        "weight_decay",
        "epsilon",
        "seed",
        "augment",
        "manifest",
        "out",
        "n_writers",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "variant" => self.variant = VariantKind::parse(value)?,
            "axis" => self.axis = Axis::parse(value)?,
            "mode" => {
                self.mode = ImageMode::parse(value)
                    .ok_or_else(|| Error::Config(format!("mode: unknown image mode `{value}`")))?
            }
            "width" => self.width = number(key, value)?,
            "epochs" => t.epochs = number(key, value)?,
            "batch" => t.batch_size = number(key, value)?,
            "lr" => t.lr0 = number(key, value)?,
            "halve_every" => t.halve_every = number(key, value)?,
            "weight_decay" => t.weight_decay = number(key, value)?,
            "epsilon" => t.epsilon = number(key, value)?,
            "seed" => t.seed = number(key, value)?,
            "augment" => t.augment = number(key, value)?,
            "manifest" => self.manifest = Some(value.into()),
            "out" => self.out = Some(value.into()),
            // Echoed for reference only; the manifest decides the writer count.
            "n_writers" => {}
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` document. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        self.apply_text(&text)
    }

    pub fn variant(&self) -> ModelVariant {
        ModelVariant::new(self.variant, self.axis)
    }

    pub fn net_config(&self, n_writers: usize) -> NetConfig {
        NetConfig::new(self.variant(), BackboneConfig::with_width(self.width), n_writers)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::Config(format!("width multiplier {} must be positive", self.width)));
        }
        Ok(())
    }

    /// `key=value` lines that [`RunConfig::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "variant={}", self.variant.name());
        let _ = writeln!(s, "axis={}", self.axis.name());
        let _ = writeln!(s, "mode={}", self.mode.name());
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "epochs={}", t.epochs);
        let _ = writeln!(s, "batch={}", t.batch_size);
        let _ = writeln!(s, "lr={}", t.lr0);
        let _ = writeln!(s, "halve_every={}", t.halve_every);
        let _ = writeln!(s, "weight_decay={}", t.weight_decay);
        let _ = writeln!(s, "epsilon={}", t.epsilon);
        let _ = writeln!(s, "seed={}", t.seed);
        let _ = writeln!(s, "augment={}", t.augment);
        if let Some(m) = &self.manifest {
            let _ = writeln!(s, "manifest={}", m.display());
        }
        if let Some(o) = &self.out {
            let _ = writeln!(s, "out={}", o.display());
        }
        s
    }
}
