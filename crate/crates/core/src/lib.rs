//! Desk-scale toolkit for studying how random data augmentation induces
//! catastrophic forgetting, and for mitigating it.
//!
//! The crate trains a small fully-connected classifier under configurable
//! augmentation policies, measures gradient interference (cosine alignment,
//! sign discrepancy) and representation erosion (layer-wise linear CKA), and
//! implements two countermeasures: exemplar replay memory and drift-ranked
//! selective weight merging, which averages the most-shifted parameters
//! back toward a snapshot taken k iterations earlier.
//!
//! Modules:
//! - [`numerics`]: dense f64 matrices and the seeded ChaCha8 generator.
//! - [`data_aug`]: IDX ingestion, the finite transform set, and the uniform
//!   vs. loss-targeted selection policies.
//! - [`model`]: the MLP with exact backprop and a canonical flat parameter
//!   view.
//! - [`diagnostics`]: interference and similarity measurements.
//! - [`mitigation`]: replay memory and selective merging.
//! - [`experiments`]: end-to-end drivers emitting structured reports.
//! - [`cli`]: command-line front end, config echo, checkpoints, CSV.
//!
//! Everything is deterministic under a fixed seed: reruns produce
//! byte-identical reports.

pub mod cli;
pub mod data_aug;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod mitigation;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
