//! Learned, schema-agnostic meta-features for tabular datasets.
//!
//! A dataset is treated as a set of (predictor value, target value) pairs and
//! encoded by a three-stage permutation-invariant network: `f` embeds each
//! scalar pair, a mean pool collapses instances, `g` transforms each
//! (predictor, target) column pair, a second mean pool collapses column pairs,
//! and `h` maps the pooled code to a fixed-length meta-feature vector. The
//! encoder is trained on an auxiliary task with abundant data: decide whether
//! two multi-fidelity batches were subsampled from the same dataset.
//!
//! The crate covers the full pipeline:
//!
//! - [`dataset`]: tabular dataset representation, CSV ingestion, and the
//!   synthetic 2-D toy generators (circles / moons / blobs).
//! - [`sampling`]: multi-fidelity batch and batch-pair samplers, stratified
//!   pair streams, k-fold splits.
//! - [`encoder`]: the set encoder in its two reference architectures, plus
//!   batch-averaged meta-feature extraction.
//! - [`engineered`]: a fixed 22-statistic engineered baseline.
//! - [`similarity`]: the exponential similarity model, its contrastive
//!   training loop, and pairwise-classification evaluation.
//! - [`hpo`]: warm-start hyperparameter optimization over surrogate tables
//!   with a Matérn-3/2 GP and expected improvement.
//! - [`mds`]: classical multidimensional scaling for 2-D embedding export.

pub mod dataset;
pub mod encoder;
pub mod engineered;
mod error;
pub mod hpo;
pub mod mds;
pub mod sampling;
pub mod similarity;
pub mod toygen;

pub use error::MfError;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, MfError>;
