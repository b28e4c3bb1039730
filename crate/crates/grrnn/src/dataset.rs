//! Loading a manifest into preprocessed, labelled network inputs.

use std::collections::BTreeSet;
use std::path::Path;

use grrnn_core::datagen::Split;
use grrnn_core::imageproc::{preprocess, ImageMode, RawImage};
use grrnn_core::train::Sample;
use grrnn_core::Error as CoreError;

use crate::error::Result;
use crate::manifest;
use crate::pgm;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub id: String,
    pub writer: usize,
    pub line: String,
    pub page: String,
    pub image: RawImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Writer id of each class index.
    pub writers: Vec<String>,
    pub train: Vec<Entry>,
    pub test: Vec<Entry>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Entry] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn samples(&self, split: Split) -> Vec<Sample> {
        self.split(split)
            .iter()
            .map(|e| Sample {
                image: e.image.clone(),
                label: e.writer,
            })
            .collect()
    }
}

/// Reads and preprocesses every image of `manifest_path`. Class indices
/// follow `writers` when given, otherwise the sorted writer ids of the
/// training split.
pub fn load(manifest_path: &Path, mode: ImageMode, writers: Option<&[String]>) -> Result<Dataset> {
    let rows = manifest::read(manifest_path)?;
    let writers: Vec<String> = match writers {
        Some(w) => w.to_vec(),
        None => rows
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| r.writer_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut ds = Dataset {
        writers,
        train: Vec::new(),
        test: Vec::new(),
    };
    for row in rows {
        let writer = ds.writers.iter().position(|w| *w == row.writer_id).ok_or_else(|| {
            CoreError::Input(format!("{}: writer {} has no class", row.image_path, row.writer_id))
        })?;
        let image = preprocess(&pgm::read(&row.resolve(manifest_path))?, mode);
        let entry = Entry {
            id: row.image_path,
            writer,
            line: row.line_id,
            page: row.page_id,
            image,
        };
        match row.split {
            Split::Train => ds.train.push(entry),
            Split::Test => ds.test.push(entry),
        }
    }
    Ok(ds)
}
