//! Tab-separated corpus manifest: one row per word image.

use std::fs::File;
use std::path::{Path, PathBuf};

use grrnn_core::datagen::Split;

use crate::error::{format_err, io_err, Result};

pub const HEADER: [&str; 5] = ["image_path", "writer_id", "page_id", "line_id", "split"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Relative paths resolve against the manifest's directory.
    pub image_path: String,
    pub writer_id: String,
    pub page_id: String,
    pub line_id: String,
    pub split: Split,
}

impl ManifestRow {
    pub fn resolve(&self, manifest: &Path) -> PathBuf {
        let p = Path::new(&self.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest.parent().unwrap_or(Path::new("")).join(p)
        }
    }
}

pub fn write(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(file);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([&r.image_path, &r.writer_id, &r.page_id, &r.line_id, r.split.name()])?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read(path: &Path) -> Result<Vec<ManifestRow>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(file);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(format_err(path, format!("expected header {}", HEADER.join("\t"))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let split = Split::parse(&rec[4])
            .ok_or_else(|| format_err(path, format!("row {}: unknown split {:?}", i + 1, &rec[4])))?;
        rows.push(ManifestRow {
            image_path: rec[0].into(),
            writer_id: rec[1].into(),
            page_id: rec[2].into(),
            line_id: rec[3].into(),
            split,
        });
    }
    Ok(rows)
}
