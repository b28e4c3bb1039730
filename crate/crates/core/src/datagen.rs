//! Synthetic handwriting: pseudo-words of spline glyphs drawn in a
//! per-writer style.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg_attr(feature = "std", allow(unused_imports))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageproc::{RawImage, CANVAS_HEIGHT, CANVAS_WIDTH};

pub const WORDS_PER_LINE: usize = 5;
pub const LINES_PER_PAGE: usize = 4;
pub const TRAIN_FRACTION: f64 = 0.8;
pub const MIN_GLYPHS: usize = 4;
pub const MAX_GLYPHS: usize = 8;
/// Distinct glyph shapes in each writer's repertoire.
pub const ALPHABET: usize = 8;
const MAX_WORD_WIDTH: f64 = 116.0;
/// Per-word anchor jitter relative to glyph size.
const GLYPH_JITTER: f64 = 0.08;
const SAMPLE_STEP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriterStyle {
    /// Mean slant in degrees, positive leans right.
    pub slant_deg: f64,
    /// Per-word slant deviation bound in degrees.
    pub slant_jitter: f64,
    /// Pen diameter in pixels.
    pub stroke_width: f64,
    /// Control-point deviation relative to glyph height.
    pub curvature: f64,
    /// Baseline wobble amplitude in pixels.
    pub wobble: f64,
    /// Multiplicative pressure noise inside strokes.
    pub ink_noise: f64,
    /// Ink darkness at full pressure.
    pub ink_tone: f64,
    pub glyph_width: f64,
    pub glyph_height: f64,
    /// Gap between glyphs in pixels.
    pub spacing: f64,
    pub glyphs: [Glyph; ALPHABET],
}

/// A glyph template: four anchors in glyph-relative units and the bend of
/// each of the three strokes joining them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Glyph {
    pub anchors: [(f64, f64); 4],
    pub bends: [f64; 3],
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl WriterStyle {
    /// Style of writer `writer` under master seed `seed`.
    pub fn for_writer(seed: u64, writer: usize) -> Self {
        let mut rng = stream_rng(seed, 2 * writer as u64);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        WriterStyle {
            slant_deg: u(-25.0, 25.0),
            slant_jitter: u(0.0, 4.0),
            stroke_width: u(1.2, 3.8),
            curvature: u(0.15, 0.9),
            wobble: u(0.0, 3.0),
            ink_noise: u(0.0, 0.35),
            ink_tone: u(0.7, 1.0),
            glyph_width: u(8.0, 14.0),
            glyph_height: u(16.0, 34.0),
            spacing: u(0.5, 5.0),
            glyphs: core::array::from_fn(|_| Glyph {
                anchors: core::array::from_fn(|i| ((i as f64 + u(-0.4, 0.4)) / 3.0, u(0.0, 1.0))),
                bends: core::array::from_fn(|_| u(-0.5, 0.5)),
            }),
        }
    }
}

type Point = (f64, f64);

fn quad(p0: Point, c: Point, p1: Point, t: f64) -> Point {
    let s = 1.0 - t;
    (
        s * s * p0.0 + 2.0 * s * t * c.0 + t * t * p1.0,
        s * s * p0.1 + 2.0 * s * t * c.1 + t * t * p1.1,
    )
}

/// Pen coverage accumulated over a canvas.
struct Pen {
    coverage: Vec<f64>,
    radius: f64,
}

impl Pen {
    fn stamp(&mut self, (x, y): Point) {
        let r = self.radius + 0.5;
        let (y0, y1) = ((y - r).floor().max(0.0), (y + r).ceil().min(CANVAS_HEIGHT as f64 - 1.0));
        let (x0, x1) = ((x - r).floor().max(0.0), (x + r).ceil().min(CANVAS_WIDTH as f64 - 1.0));
        if y0 > y1 || x0 > x1 {
            return;
        }
        for py in y0 as usize..=y1 as usize {
            for px in x0 as usize..=x1 as usize {
                let (dx, dy) = (px as f64 + 0.5 - x, py as f64 + 0.5 - y);
                let c = (r - (dx * dx + dy * dy).sqrt()).clamp(0.0, 1.0);
                let cell = &mut self.coverage[py * CANVAS_WIDTH + px];
                *cell = cell.max(c);
            }
        }
    }

    fn curve(&mut self, p0: Point, c: Point, p1: Point) {
        let len = (p0.0 - c.0).hypot(p0.1 - c.1) + (c.0 - p1.0).hypot(c.1 - p1.1);
        let steps = ((len / SAMPLE_STEP).ceil() as usize).max(1);
        for i in 0..=steps {
            self.stamp(quad(p0, c, p1, i as f64 / steps as f64));
        }
    }
}

/// Renders one pseudo-word of 4 to 8 glyphs on a white 64×128 canvas.
pub fn render_word<R: Rng + ?Sized>(style: &WriterStyle, rng: &mut R) -> RawImage {
    let n = rng.random_range(MIN_GLYPHS..=MAX_GLYPHS);
    let slant = (style.slant_deg + rng.random_range(-1.0..=1.0) * style.slant_jitter).to_radians();
    let phase = rng.random_range(0.0..core::f64::consts::TAU);
    let natural = n as f64 * style.glyph_width + (n - 1) as f64 * style.spacing;
    let squeeze = (MAX_WORD_WIDTH / natural).min(1.0);
    let (gw, gh) = (style.glyph_width * squeeze, style.glyph_height);
    let left = (CANVAS_WIDTH as f64 - natural * squeeze) / 2.0;
    let baseline = (CANVAS_HEIGHT as f64 + gh) / 2.0;
    let shear = slant.tan();
    // Maps glyph-local coordinates (x right, y up from the baseline) to the canvas.
    let place = |x: f64, y: f64| -> Point {
        let wob = style.wobble * (x / 17.0 + phase).sin();
        (x + (y - gh / 2.0) * shear, baseline - y + wob)
    };
    let mut pen = Pen {
        coverage: vec![0.0; CANVAS_WIDTH * CANVAS_HEIGHT],
        radius: style.stroke_width / 2.0,
    };
    for g in 0..n {
        let x0 = left + g as f64 * (gw + style.spacing * squeeze);
        let glyph = &style.glyphs[rng.random_range(0..ALPHABET)];
        let mut jitter = || rng.random_range(-GLYPH_JITTER..GLYPH_JITTER);
        let anchors: Vec<(f64, f64)> = glyph
            .anchors
            .iter()
            .map(|&(x, y)| {
                let x = x0 + gw * (x + jitter()).clamp(0.0, 1.0);
                (x, gh * (y + jitter()).clamp(0.0, 1.0))
            })
            .collect();
        for (w, &bend) in anchors.windows(2).zip(&glyph.bends) {
            let (a, b) = (w[0], w[1]);
            let bend = style.curvature * gh * (bend + 2.0 * jitter());
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len = dx.hypot(dy).max(1e-9);
            let c = ((a.0 + b.0) / 2.0 - dy / len * bend, (a.1 + b.1) / 2.0 + dx / len * bend);
            pen.curve(place(a.0, a.1), place(c.0, c.1), place(b.0, b.1));
        }
    }
    let pixels = pen
        .coverage
        .iter()
        .map(|&c| {
            let pressure = 1.0 - style.ink_noise * rng.random::<f64>();
            (1.0 - c * style.ink_tone * pressure).clamp(0.0, 1.0) as f32
        })
        .collect();
    RawImage::new(CANVAS_WIDTH, CANVAS_HEIGHT, pixels).expect("canvas dimensions are fixed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Number of leading pages that go to training: the count whose word total
/// is closest to 80%, ties to more pages, keeping at least one test page
/// whenever there are two or more pages.
pub fn train_pages(words: usize) -> usize {
    let per_page = WORDS_PER_LINE * LINES_PER_PAGE;
    let pages = words.div_ceil(per_page);
    if pages <= 1 {
        return pages;
    }
    let target = TRAIN_FRACTION * words as f64;
    let mut best = 1;
    for k in 1..pages {
        let covered = (k * per_page) as f64;
        let best_covered = (best * per_page) as f64;
        if (covered - target).abs() <= (best_covered - target).abs() {
            best = k;
        }
    }
    best
}

pub fn writer_id(writer: usize) -> String {
    format!("w{writer:04}")
}

pub fn word_id(writer: usize, word: usize) -> String {
    format!("w{writer:04}_{word:04}")
}

pub fn line_id(writer: usize, word: usize) -> String {
    format!("w{writer:04}_l{:03}", word / WORDS_PER_LINE)
}

pub fn page_id(writer: usize, word: usize) -> String {
    format!("w{writer:04}_p{:02}", word / (WORDS_PER_LINE * LINES_PER_PAGE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusWord {
    pub writer: usize,
    pub word: usize,
    pub line: String,
    pub page: String,
    pub split: Split,
    pub image: RawImage,
}

/// All words of one writer, in order.
pub fn writer_words(seed: u64, writer: usize, words: usize) -> Vec<CorpusWord> {
    let style = WriterStyle::for_writer(seed, writer);
    let mut rng = stream_rng(seed, 2 * writer as u64 + 1);
    let cut = train_pages(words) * WORDS_PER_LINE * LINES_PER_PAGE;
    (0..words)
        .map(|word| CorpusWord {
            writer,
            word,
            line: line_id(writer, word),
            page: page_id(writer, word),
            split: if word < cut { Split::Train } else { Split::Test },
            image: render_word(&style, &mut rng),
        })
        .collect()
}

pub fn check_corpus_size(writers: usize, words: usize) -> Result<()> {
    if writers < 2 {
        return Err(Error::Config(format!("need at least 2 writers, got {writers}")));
    }
    if words < 2 {
        return Err(Error::Config(format!("need at least 2 words per writer, got {words}")));
    }
    Ok(())
}
