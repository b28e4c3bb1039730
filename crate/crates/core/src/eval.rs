//! Word-level top-k, line/page aggregation and nearest-neighbour
//! identification over L2-normalized features.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::engine::Tape;
use crate::error::{Error, Result};
use crate::imageproc::RawImage;
use crate::model::{stack_images, Mode, WriterNet};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub id: String,
    pub label: usize,
    pub line: String,
    pub page: String,
    pub probs: Vec<f64>,
}

/// Numerically stable softmax in f64.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let xs: Vec<f64> = logits.iter().map(|v| v.to_f64_lossy()).collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|v| Float::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Position of `label` when classes are sorted by descending probability,
/// ties going to the smaller class index.
pub fn rank_of(probs: &[f64], label: usize) -> usize {
    let p = probs[label];
    probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < label))
        .count()
}

pub fn topk_accuracy(records: &[PredictionRecord], k: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Input("no prediction records".into()));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    for r in records {
        if r.label >= r.probs.len() {
            return Err(Error::Input(format!("{}: label {} outside {} classes", r.id, r.label, r.probs.len())));
        }
    }
    let hits = records.iter().filter(|r| rank_of(&r.probs, r.label) < k).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Mean softmax response of a group sharing a line or page.
pub fn aggregate_group(id: &str, group: &[&PredictionRecord]) -> Result<PredictionRecord> {
    let first = group
        .first()
        .ok_or_else(|| Error::Input(format!("group {id} is empty")))?;
    let n = first.probs.len();
    let mut probs = alloc::vec![0.0; n];
    for r in group {
        if r.label != first.label {
            return Err(Error::MixedLabels {
                group: id.into(),
                first: first.label,
                second: r.label,
            });
        }
        if r.probs.len() != n {
            return Err(Error::dim("aggregate", "classes", n, r.probs.len()));
        }
        for (a, &p) in probs.iter_mut().zip(&r.probs) {
            *a += p;
        }
    }
    let count = group.len() as f64;
    probs.iter_mut().for_each(|p| *p /= count);
    Ok(PredictionRecord {
        id: id.into(),
        label: first.label,
        line: if group.iter().all(|r| r.line == first.line) { first.line.clone() } else { String::new() },
        page: first.page.clone(),
        probs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Line,
    Page,
}

/// One aggregated record per distinct line or page id, ordered by id.
pub fn aggregate(records: &[PredictionRecord], by: GroupBy) -> Result<Vec<PredictionRecord>> {
    let mut groups: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        let key = match by {
            GroupBy::Line => r.line.as_str(),
            GroupBy::Page => r.page.as_str(),
        };
        groups.entry(key).or_default().push(r);
    }
    groups.into_iter().map(|(k, g)| aggregate_group(k, &g)).collect()
}

/// Per-writer `(writer, samples, top-1 hits)`, ordered by writer.
pub fn per_writer_top1(records: &[PredictionRecord]) -> Vec<(usize, usize, usize)> {
    let mut table: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = table.entry(r.label).or_default();
        e.0 += 1;
        if rank_of(&r.probs, r.label) == 0 {
            e.1 += 1;
        }
    }
    table.into_iter().map(|(w, (n, c))| (w, n, c)).collect()
}

pub fn l2_normalize(f: &[f64]) -> Result<Vec<f64>> {
    let norm = Float::sqrt(f.iter().map(|v| v * v).sum::<f64>());
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateFeature);
    }
    Ok(f.iter().map(|v| v / norm).collect())
}

/// Eval-mode network responses for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub probs: Vec<f64>,
    /// Unnormalized head feature.
    pub feature: Vec<f64>,
}

/// Runs `images` through `net` in eval mode, `batch` at a time.
pub fn infer<T: Real>(net: &WriterNet<T>, images: &[RawImage], batch: usize) -> Result<Vec<Inference>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch.max(1)) {
        let tensors: Vec<_> = chunk.iter().map(|img| img.to_tensor::<T>()).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(stack_images(&tensors)?, false);
        let pass = net.forward(&mut tape, x, Mode::Eval)?;
        let logits = tape.value(pass.output.logits);
        let feats = tape.value(pass.output.feature);
        let (n, d) = (logits.shape()[1], feats.shape()[1]);
        for (l, f) in logits.data().chunks_exact(n).zip(feats.data().chunks_exact(d)) {
            out.push(Inference {
                probs: softmax(l),
                feature: f.iter().map(|v| v.to_f64_lossy()).collect(),
            });
        }
    }
    Ok(out)
}

/// L2-normalized head feature of a single image.
pub fn extract_feature<T: Real>(net: &WriterNet<T>, img: &RawImage) -> Result<Vec<f64>> {
    let inf = infer(net, core::slice::from_ref(img), 1)?;
    l2_normalize(&inf[0].feature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Normalize each word feature, average, normalize again.
    #[default]
    NormalizedMean,
    /// Average the raw features, then normalize.
    RawMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriterModel {
    pub writer: usize,
    pub mean: Vec<f64>,
}

/// One prototype per writer from `(writer, raw feature)` pairs of the
/// training split, ordered by writer.
pub fn build_writer_models(features: &[(usize, Vec<f64>)], averaging: Averaging) -> Result<Vec<WriterModel>> {
    let mut sums: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let dim = features.first().map_or(0, |f| f.1.len());
    for (w, f) in features {
        if f.len() != dim {
            return Err(Error::dim("writer model", "feature length", dim, f.len()));
        }
        let f = match averaging {
            Averaging::NormalizedMean => l2_normalize(f)?,
            Averaging::RawMean => f.clone(),
        };
        let acc = sums.entry(*w).or_insert_with(|| alloc::vec![0.0; dim]);
        acc.iter_mut().zip(&f).for_each(|(a, v)| *a += v);
    }
    sums.into_iter()
        .map(|(writer, sum)| Ok(WriterModel { writer, mean: l2_normalize(&sum)? }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub writer: usize,
    /// `(writer, distance)` by ascending distance, ties by writer id.
    pub ranked: Vec<(usize, f64)>,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    Float::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

pub fn nn_identify(query: &[f64], models: &[WriterModel]) -> Result<Identification> {
    if models.is_empty() {
        return Err(Error::Input("no writer models".into()));
    }
    let mut ranked = Vec::with_capacity(models.len());
    for m in models {
        if m.mean.len() != query.len() {
            return Err(Error::dim("nn_identify", "feature length", m.mean.len(), query.len()));
        }
        ranked.push((m.writer, euclidean(query, &m.mean)));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(Identification { writer: ranked[0].0, ranked })
}

/// Top-1 and top-5 of nearest-neighbour identification for
/// `(writer, raw feature)` queries.
pub fn feature_topk(queries: &[(usize, Vec<f64>)], models: &[WriterModel]) -> Result<(f64, f64)> {
    if queries.is_empty() {
        return Err(Error::Input("no queries".into()));
    }
    let (mut top1, mut top5) = (0usize, 0usize);
    for (w, f) in queries {
        let id = nn_identify(&l2_normalize(f)?, models)?;
        let pos = id.ranked.iter().position(|(m, _)| m == w).unwrap_or(usize::MAX);
        top1 += (pos < 1) as usize;
        top5 += (pos < 5) as usize;
    }
    let n = queries.len() as f64;
    Ok((top1 as f64 / n, top5 as f64 / n))
}
