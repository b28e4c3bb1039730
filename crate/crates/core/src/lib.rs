//! Writer identification from single handwritten word images.
//!
//! The crate contains everything that is pure computation: a small
//! reverse-mode differentiation engine, the convolutional backbone, the
//! fragment-sequence recurrent head, label-smoothing training with Adam,
//! image preprocessing, evaluation protocols and a synthetic handwriting
//! generator. File formats and the command line live in the `grrnn` crate.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod datagen;
pub mod engine;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod imageproc;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::Tensor;
