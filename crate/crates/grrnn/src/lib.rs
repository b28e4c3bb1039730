//! Files, pipelines and the command line around `grrnn-core`.
//!
//! Corpus images are binary PGM files listed in a tab-separated manifest.
//! Checkpoints are single little-endian files starting with `GRRNN1`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod pgm;
pub mod pipeline;

pub use error::{Error, Result};
