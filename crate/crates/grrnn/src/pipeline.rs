//! Training and evaluation runs over a manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use grrnn_core::datagen::Split;
use grrnn_core::eval::{
    aggregate, build_writer_models, feature_topk, infer, per_writer_top1, topk_accuracy, Averaging, GroupBy,
    PredictionRecord,
};
use grrnn_core::model::WriterNet;
use grrnn_core::train::{train, EpochMetrics};
use grrnn_core::Error as CoreError;

use crate::checkpoint::{self, ModelMeta};
use crate::config::RunConfig;
use crate::dataset::{self, Dataset, Entry};
use crate::error::{io_err, Error, Result};

pub const CHECKPOINT_NAME: &str = "model.ckpt";
pub const METRICS_NAME: &str = "metrics.csv";
pub const CONFIG_ECHO_NAME: &str = "config.txt";
pub const METRICS_HEADER: &str = "epoch,lr,train_loss,train_top1";
const INFER_BATCH: usize = 32;

pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub checkpoint: PathBuf,
    pub net: WriterNet<f32>,
    pub meta: ModelMeta,
    pub dataset: Dataset,
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("`{key}` is required")))
}

/// Trains per `cfg`, writing the config echo, the metrics CSV and the
/// final checkpoint into `cfg.out`. Progress lines go to `log`.
pub fn run_train(cfg: &RunConfig, log: &mut dyn Write) -> Result<TrainReport> {
    cfg.validate()?;
    let manifest = required(&cfg.manifest, "manifest")?;
    let out = required(&cfg.out, "out")?;
    let dataset = dataset::load(manifest, cfg.mode, None)?;
    if dataset.train.is_empty() {
        return Err(CoreError::Input(format!("{}: empty training split", manifest.display())).into());
    }
    let net_cfg = cfg.net_config(dataset.writers.len());
    net_cfg.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let echo = out.join(CONFIG_ECHO_NAME);
    let text = format!("{}n_writers={}\n", cfg.to_text(), dataset.writers.len());
    fs::write(&echo, text).map_err(io_err(&echo))?;

    let metrics_path = out.join(METRICS_NAME);
    let mut csv = BufWriter::new(File::create(&metrics_path).map_err(io_err(&metrics_path))?);
    writeln!(csv, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;
    let mut net = WriterNet::<f32>::new(net_cfg, cfg.train.seed)?;
    let _ = writeln!(
        log,
        "training {} on {} words of {} writers",
        net_cfg.describe(),
        dataset.train.len(),
        dataset.writers.len()
    );
    let mut write_err = None;
    let metrics = train(&mut net, &dataset.samples(Split::Train), cfg.train, cfg.mode, |m, _| {
        let row = format!("{},{},{},{}", m.epoch, m.lr, m.train_loss, m.train_top1);
        if let Err(e) = writeln!(csv, "{row}").and_then(|_| csv.flush()) {
            write_err.get_or_insert(e);
        }
        let _ = writeln!(log, "epoch {:>3}  lr {:.3e}  loss {:.4}  top1 {:.4}", m.epoch, m.lr, m.train_loss, m.train_top1);
    })?;
    if let Some(e) = write_err {
        return Err(io_err(&metrics_path)(e));
    }
    let meta = ModelMeta {
        net: net_cfg,
        mode: cfg.mode,
        writers: dataset.writers.clone(),
    };
    let ckpt = out.join(CHECKPOINT_NAME);
    checkpoint::save(&ckpt, &net, &meta)?;
    Ok(TrainReport {
        metrics,
        checkpoint: ckpt,
        net,
        meta,
        dataset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Word,
    Line,
    Page,
    Feature,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Word, Protocol::Line, Protocol::Page, Protocol::Feature];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Word => "word",
            Protocol::Line => "line",
            Protocol::Page => "page",
            Protocol::Feature => "feature",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Protocol::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub protocol: Protocol,
    pub variant: String,
    pub axis: String,
    pub mode: String,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ResultRow>,
    /// `(writer id, words, top-1 hits)` at word level.
    pub per_writer: Vec<(String, usize, usize)>,
}

impl EvalReport {
    pub fn get(&self, p: Protocol) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.protocol == p)
    }
}

fn records(net: &WriterNet<f32>, entries: &[Entry]) -> Result<(Vec<PredictionRecord>, Vec<(usize, Vec<f64>)>)> {
    let images: Vec<_> = entries.iter().map(|e| e.image.clone()).collect();
    let inf = infer(net, &images, INFER_BATCH)?;
    let mut recs = Vec::with_capacity(entries.len());
    let mut feats = Vec::with_capacity(entries.len());
    for (e, i) in entries.iter().zip(inf) {
        recs.push(PredictionRecord {
            id: e.id.clone(),
            label: e.writer,
            line: e.line.clone(),
            page: e.page.clone(),
            probs: i.probs,
        });
        feats.push((e.writer, i.feature));
    }
    Ok((recs, feats))
}

/// Runs `protocols` on the `split` words of an already loaded dataset.
/// The feature protocol builds writer models from the training split.
pub fn evaluate_dataset(
    net: &WriterNet<f32>,
    meta: &ModelMeta,
    data: &Dataset,
    split: Split,
    protocols: &[Protocol],
    averaging: Averaging,
) -> Result<EvalReport> {
    let (recs, feats) = records(net, data.split(split))?;
    if recs.is_empty() {
        return Err(CoreError::Input(format!("{} split is empty", split.name())).into());
    }
    let v = meta.net.variant;
    let row = |protocol, top1, top5| ResultRow {
        protocol,
        variant: v.kind.name().into(),
        axis: v.axis.name().into(),
        mode: meta.mode.name().into(),
        top1,
        top5,
    };
    let mut rows = Vec::new();
    for &p in protocols {
        let r = match p {
            Protocol::Word => row(p, topk_accuracy(&recs, 1)?, topk_accuracy(&recs, 5)?),
            Protocol::Line | Protocol::Page => {
                let by = if p == Protocol::Line { GroupBy::Line } else { GroupBy::Page };
                let groups = aggregate(&recs, by)?;
                row(p, topk_accuracy(&groups, 1)?, topk_accuracy(&groups, 5)?)
            }
            Protocol::Feature => {
                let gallery = if split == Split::Train {
                    feats.clone()
                } else {
                    records(net, &data.train)?.1
                };
                let models = build_writer_models(&gallery, averaging)?;
                let (t1, t5) = feature_topk(&feats, &models)?;
                row(p, t1, t5)
            }
        };
        rows.push(r);
    }
    let per_writer = per_writer_top1(&recs)
        .into_iter()
        .map(|(w, n, c)| (meta.writers[w].clone(), n, c))
        .collect();
    Ok(EvalReport { rows, per_writer })
}

/// Loads the manifest with the checkpoint's mode and class order, then
/// evaluates.
pub fn evaluate(
    net: &WriterNet<f32>,
    meta: &ModelMeta,
    manifest: &Path,
    split: Split,
    protocols: &[Protocol],
    averaging: Averaging,
) -> Result<EvalReport> {
    let data = dataset::load(manifest, meta.mode, Some(&meta.writers))?;
    evaluate_dataset(net, meta, &data, split, protocols, averaging)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["protocol", "variant", "axis", "mode", "top1", "top5"])?;
    for r in rows {
        w.write_record([
            r.protocol.name(),
            &r.variant,
            &r.axis,
            &r.mode,
            &r.top1.to_string(),
            &r.top5.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_per_writer(path: &Path, rows: &[(String, usize, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["writer_id", "words", "correct", "top1"])?;
    for (id, n, c) in rows {
        w.write_record([id.as_str(), &n.to_string(), &c.to_string(), &(*c as f64 / *n as f64).to_string()])?;
    }
    w.flush().map_err(io_err(path))
}
