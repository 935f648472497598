//! Morphology-guided representation alignment at desk scale.
//!
//! The crate is organised around the pieces of a single-domain generalization
//! experiment:
//!
//! - [`synthdata`] renders labelled nuclear-morphology patches with exact masks
//!   under several synthetic staining/scanner domains, plus the training
//!   augmentation pipeline.
//! - [`model`] is a small shared convolutional encoder with a logistic head,
//!   with hand-written forward and backward passes.
//! - [`losses`] holds the mask-anchored contrastive alignment loss and the dual
//!   binary cross-entropy.
//! - [`optim`] provides AdamW, the warmup + cosine schedule and stochastic
//!   weight averaging.
//! - [`robustness`] and [`attribution`] evaluate trained models under
//!   corruptions, L∞ PGD attacks and integrated gradients.
//! - [`harness`] ties everything into reproducible, config-driven runs.
//!
//! All numerics are `f64`. Every random draw is derived from an explicit seed,
//! so outputs are identical regardless of thread count.

pub mod attribution;
pub mod error;
pub mod harness;
pub mod losses;
pub mod model;
pub mod optim;
pub mod robustness;
pub mod seed;
pub mod stats;
pub mod synthdata;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Image, Mask};
