//! Word-image preprocessing: canvas fitting, Otsu binarization, contour
//! extraction and translation augmentation.
//!
//! Gray images use the dark-ink convention (0 = ink, 1 = paper). Binary and
//! contour images flip it: 1 marks foreground so zero padding is neutral.

use alloc::vec;
use alloc::vec::Vec;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const CANVAS_HEIGHT: usize = 64;
pub const CANVAS_WIDTH: usize = 128;
pub const MAX_SHIFT: i32 = 4;
const BINS: usize = 256;

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageMode {
    Gray,
    Binary,
    Contour,
}

impl ImageMode {
    /// Value used for padding and for pixels vacated by a shift.
    pub fn background(self) -> f32 {
        match self {
            ImageMode::Gray => 1.0,
            ImageMode::Binary | ImageMode::Contour => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ImageMode::Gray => "gray",
            ImageMode::Binary => "binary",
            ImageMode::Contour => "contour",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gray" | "grey" => Some(ImageMode::Gray),
            "binary" => Some(ImageMode::Binary),
            "contour" => Some(ImageMode::Contour),
            _ => None,
        }
    }
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input("image has no pixels".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::dim("image", "pixel count", width * height, pixels.len()));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(alloc::format!("pixel value {v} outside [0, 1]")));
        }
        Ok(RawImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        RawImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.pixels[y * self.width + x] = v;
    }

    /// `[1, height, width, 1]` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            &[1, self.height, self.width, 1],
            self.pixels.iter().map(|&v| T::lit(v as f64)).collect(),
        )
        .expect("pixel count matches")
    }

    pub fn count_foreground(&self) -> usize {
        self.pixels.iter().filter(|&&v| v > 0.5).count()
    }
}

/// Geometry of the scaled content inside the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanvasPlacement {
    pub content_height: usize,
    pub content_width: usize,
    pub top: usize,
    pub left: usize,
}

/// Aspect-preserving fit of a `height×width` image into the 64×128 canvas.
pub fn canvas_placement(height: usize, width: usize) -> CanvasPlacement {
    let scale = f64::min(
        CANVAS_HEIGHT as f64 / height as f64,
        CANVAS_WIDTH as f64 / width as f64,
    );
    let ch = ((height as f64 * scale).round() as usize).clamp(1, CANVAS_HEIGHT);
    let cw = ((width as f64 * scale).round() as usize).clamp(1, CANVAS_WIDTH);
    CanvasPlacement {
        content_height: ch,
        content_width: cw,
        top: (CANVAS_HEIGHT - ch) / 2,
        left: (CANVAS_WIDTH - cw) / 2,
    }
}

/// Bilinear, aspect-preserving resize onto a centered 64×128 canvas.
///
/// Binary and contour inputs are re-thresholded at 0.5 after interpolation
/// so the output stays `{0, 1}`-valued.
pub fn resize_to_canvas(img: &RawImage, mode: ImageMode) -> RawImage {
    let p = canvas_placement(img.height, img.width);
    let mut out = RawImage::filled(CANVAS_WIDTH, CANVAS_HEIGHT, mode.background());
    let sy = img.height as f64 / p.content_height as f64;
    let sx = img.width as f64 / p.content_width as f64;
    let max_y = (img.height - 1) as f64;
    let max_x = (img.width - 1) as f64;
    for y in 0..p.content_height {
        let fy = (((y as f64 + 0.5) * sy) - 0.5).clamp(0.0, max_y);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for x in 0..p.content_width {
            let fx = (((x as f64 + 0.5) * sx) - 0.5).clamp(0.0, max_x);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f64;
            let top = img.get(y0, x0) as f64 * (1.0 - tx) + img.get(y0, x1) as f64 * tx;
            let bottom = img.get(y1, x0) as f64 * (1.0 - tx) + img.get(y1, x1) as f64 * tx;
            let mut v = (top * (1.0 - ty) + bottom * ty) as f32;
            if mode != ImageMode::Gray {
                v = if v >= 0.5 { 1.0 } else { 0.0 };
            }
            out.set(p.top + y, p.left + x, v.clamp(0.0, 1.0));
        }
    }
    out
}

fn bin_of(v: f32) -> usize {
    ((v * BINS as f32) as usize).min(BINS - 1)
}

/// Global Otsu threshold over a 256-bin histogram of `[0, 1]`.
///
/// Pixels strictly below the returned value are ink. A constant image has
/// no separating boundary and returns its own value.
pub fn otsu_threshold(img: &RawImage) -> f32 {
    let mut hist = [0u64; BINS];
    for &v in &img.pixels {
        hist[bin_of(v)] += 1;
    }
    let total = img.pixels.len() as f64;
    let weighted_total: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let mut best: Option<(usize, f64)> = None;
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    // boundary k: bins [0, k) versus [k, 256)
    for k in 1..BINS {
        w0 += hist[k - 1] as f64;
        sum0 += (k - 1) as f64 * hist[k - 1] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (weighted_total - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((k, between));
        }
    }
    match best {
        Some((k, _)) => k as f32 / BINS as f32,
        None => img.pixels[0],
    }
}

/// Ink (`v < threshold`) becomes 1, paper becomes 0.
pub fn binarize(img: &RawImage, threshold: f32) -> RawImage {
    RawImage {
        width: img.width,
        height: img.height,
        pixels: img
            .pixels
            .iter()
            .map(|&v| if v < threshold { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// Foreground pixels with at least one background 4-neighbour; the image
/// border counts as background.
pub fn extract_contour(bin: &RawImage) -> RawImage {
    let (w, h) = (bin.width, bin.height);
    let fg = |y: isize, x: isize| {
        y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && bin.get(y as usize, x as usize) > 0.5
    };
    let mut out = RawImage::filled(w, h, 0.0);
    for y in 0..h as isize {
        for x in 0..w as isize {
            if fg(y, x) && !(fg(y - 1, x) && fg(y + 1, x) && fg(y, x - 1) && fg(y, x + 1)) {
                out.set(y as usize, x as usize, 1.0);
            }
        }
    }
    out
}

/// Full preprocessing of a gray word image into network input.
///
/// Binarization and contour extraction run at the source resolution before
/// the canvas fit.
pub fn preprocess(img: &RawImage, mode: ImageMode) -> RawImage {
    match mode {
        ImageMode::Gray => resize_to_canvas(img, mode),
        ImageMode::Binary => resize_to_canvas(&binarize(img, otsu_threshold(img)), mode),
        ImageMode::Contour => {
            let bin = binarize(img, otsu_threshold(img));
            resize_to_canvas(&extract_contour(&bin), mode)
        }
    }
}

/// Integer translation by `(dy, dx)`; vacated pixels take `fill`.
pub fn translate(img: &RawImage, dy: i32, dx: i32, fill: f32) -> RawImage {
    let (w, h) = (img.width as i64, img.height as i64);
    let mut out = RawImage::filled(img.width, img.height, fill);
    for y in 0..h {
        let sy = y - dy as i64;
        if sy < 0 || sy >= h {
            continue;
        }
        for x in 0..w {
            let sx = x - dx as i64;
            if sx < 0 || sx >= w {
                continue;
            }
            out.pixels[(y * w + x) as usize] = img.pixels[(sy * w + sx) as usize];
        }
    }
    out
}

/// Shift drawn uniformly from `[-4, 4]` on each axis.
pub fn sample_shift<R: Rng + ?Sized>(rng: &mut R) -> (i32, i32) {
    (
        rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
        rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
    )
}

/// Random translation augmentation for training.
pub fn translate_augment<R: Rng + ?Sized>(img: &RawImage, mode: ImageMode, rng: &mut R) -> RawImage {
    let (dy, dx) = sample_shift(rng);
    translate(img, dy, dx, mode.background())
}
