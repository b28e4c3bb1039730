//! Binary (P5) portable graymap files.

use std::fs;
use std::path::Path;

use grrnn_core::imageproc::RawImage;

use crate::error::{format_err, io_err, Result};

/// Encodes with maxval 255, rounding each intensity.
pub fn encode(img: &RawImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Decodes 8- or 16-bit P5 data, scaling intensities to `[0, 1]`.
pub fn decode(bytes: &[u8]) -> Result<RawImage, String> {
    let mut pos = 0;
    let mut token = || -> Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let mut number = |what: &str| -> Result<usize, String> {
        token()?.parse().map_err(|_| format!("bad {what}"))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(format!("maxval {maxval} out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = bytes.get(pos + 1..).ok_or("missing raster")?;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bpp;
    if data.len() < need {
        return Err(format!("raster has {} bytes, expected {need}", data.len()));
    }
    let scale = maxval as f32;
    let pixels = if bpp == 1 {
        data[..need].iter().map(|&b| (b as f32 / scale).min(1.0)).collect()
    } else {
        data[..need]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f32 / scale).min(1.0))
            .collect()
    };
    RawImage::new(width, height, pixels).map_err(|e| e.to_string())
}

pub fn read(path: &Path) -> Result<RawImage> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes).map_err(|msg| format_err(path, msg))
}

pub fn write(path: &Path, img: &RawImage) -> Result<()> {
    fs::write(path, encode(img)).map_err(io_err(path))
}
