//! Little-endian model files: magic, config echo, tensor manifest, raw
//! 32-bit values.

use std::fs;
use std::path::Path;

use grrnn_core::imageproc::ImageMode;
use grrnn_core::model::{Axis, BackboneConfig, ModelVariant, NetConfig, VariantKind, WriterNet};
use grrnn_core::Tensor;

use crate::error::{format_err, io_err, Result};

pub const MAGIC: &[u8; 6] = b"GRRNN1";
const DTYPE_F32: u8 = 0;

/// What a checkpoint needs besides its tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub net: NetConfig,
    pub mode: ImageMode,
    /// Writer id of each class index.
    pub writers: Vec<String>,
}

impl ModelMeta {
    fn to_text(&self) -> String {
        let n = &self.net;
        format!(
            "variant={}\naxis={}\nmode={}\nwidth={}\nplan={}\nn_writers={}\nwriters={}\n",
            n.variant.kind.name(),
            n.variant.axis.name(),
            self.mode.name(),
            n.backbone.width,
            n.backbone.plan.map(|c| c.to_string()).join(","),
            n.n_writers,
            self.writers.join(",")
        )
    }

    fn from_text(text: &str) -> Result<Self, String> {
        let get = |key: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| format!("config echo lacks `{key}`"))
        };
        let kind = VariantKind::parse(get("variant")?).map_err(|e| e.to_string())?;
        let axis = Axis::parse(get("axis")?).map_err(|e| e.to_string())?;
        let mode = ImageMode::parse(get("mode")?).ok_or("bad mode")?;
        let width: f64 = get("width")?.parse().map_err(|_| "bad width")?;
        let plan: Vec<usize> = get("plan")?
            .split(',')
            .map(|c| c.parse().map_err(|_| "bad plan"))
            .collect::<Result<_, _>>()?;
        let plan: [usize; 4] = plan.try_into().map_err(|_| "plan needs four stages")?;
        let n_writers: usize = get("n_writers")?.parse().map_err(|_| "bad n_writers")?;
        let writers: Vec<String> = get("writers")?.split(',').map(String::from).collect();
        if writers.len() != n_writers {
            return Err(format!("{} writer ids for {n_writers} classes", writers.len()));
        }
        Ok(ModelMeta {
            net: NetConfig::new(ModelVariant::new(kind, axis), BackboneConfig { plan, width }, n_writers),
            mode,
            writers,
        })
    }
}

pub fn encode(net: &WriterNet<f32>, meta: &ModelMeta) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    let text = meta.to_text();
    out.extend((text.len() as u32).to_le_bytes());
    out.extend(text.as_bytes());
    let tensors = net.named_tensors();
    out.extend((tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        out.push(DTYPE_F32);
        out.extend((t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend((d as u32).to_le_bytes());
        }
    }
    for (_, t) in &tensors {
        for v in t.data() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn string(&mut self) -> Result<&'a str, String> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| "invalid UTF-8".to_string())
    }
}

pub fn decode(bytes: &[u8]) -> Result<(WriterNet<f32>, ModelMeta), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err("not a GRRNN1 checkpoint".into());
    }
    let meta = ModelMeta::from_text(c.string()?)?;
    let mut net = WriterNet::<f32>::zeros(meta.net).map_err(|e| e.to_string())?;
    let count = c.u32()?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name = c.string()?.to_string();
        let dtype = c.take(1)?[0];
        if dtype != DTYPE_F32 {
            return Err(format!("{name}: unsupported dtype code {dtype}"));
        }
        let ndim = c.u32()?;
        let shape = (0..ndim).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
        entries.push((name, shape));
    }
    let expected: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut seen: Vec<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
    seen.sort_unstable();
    let mut want: Vec<&str> = expected.iter().map(String::as_str).collect();
    want.sort_unstable();
    if seen != want {
        return Err(format!("tensor set does not match a {} network", meta.net.describe()));
    }
    for (name, shape) in entries {
        let n: usize = shape.iter().product();
        let raw = c.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| e.to_string())?;
        net.set_named(&name, t).map_err(|e| e.to_string())?;
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok((net, meta))
}

pub fn save(path: &Path, net: &WriterNet<f32>, meta: &ModelMeta) -> Result<()> {
    fs::write(path, encode(net, meta)).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<(WriterNet<f32>, ModelMeta)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|msg| format_err(path, msg))
}

/// `(name, shape)` of every stored tensor, in file order.
pub fn manifest(bytes: &[u8]) -> Result<Vec<(String, Vec<usize>)>, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err("not a GRRNN1 checkpoint".into());
    }
    c.string()?;
    let count = c.u32()?;
    (0..count)
        .map(|_| {
            let name = c.string()?.to_string();
            c.take(1)?;
            let ndim = c.u32()?;
            let shape = (0..ndim).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
            Ok((name, shape))
        })
        .collect()
}
