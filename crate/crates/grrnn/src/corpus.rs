//! Writing the synthetic corpus to disk.

use std::fs;
use std::path::Path;

use grrnn_core::datagen::{check_corpus_size, writer_id, writer_words};

use crate::error::{io_err, Result};
use crate::manifest::{self, ManifestRow};
use crate::pgm;

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Renders `writers × words` images under `out` and writes the manifest.
pub fn generate_corpus(writers: usize, words: usize, seed: u64, out: &Path) -> Result<Vec<ManifestRow>> {
    check_corpus_size(writers, words)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut rows = Vec::with_capacity(writers * words);
    for w in 0..writers {
        let dir_name = format!("writer_{w:04}");
        let dir = out.join(&dir_name);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for word in writer_words(seed, w, words) {
            let file = format!("word_{:04}.pgm", word.word);
            pgm::write(&dir.join(&file), &word.image)?;
            rows.push(ManifestRow {
                image_path: format!("{dir_name}/{file}"),
                writer_id: writer_id(w),
                page_id: word.page,
                line_id: word.line,
                split: word.split,
            });
        }
    }
    manifest::write(&out.join(MANIFEST_NAME), &rows)?;
    Ok(rows)
}
