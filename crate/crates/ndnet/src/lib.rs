//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! The crate provides exactly the numeric substrate a small set-encoder needs:
//!
//! - [`Tensor`]: a row-major `f64` matrix.
//! - [`Tape`] / [`Value`]: an operation tape recording matrix ops for reverse-mode
//!   differentiation. A backward pass walks the tape in reverse topological order
//!   (the tape is append-only, so insertion order *is* a topological order).
//! - [`DenseLayer`], [`ResidualBlock`], [`Stack`]: feed-forward building blocks.
//! - [`AdamState`]: a bias-corrected Adam optimizer over any [`Parameterized`] model.
//! - [`Checkpoint`]: a versioned JSON parameter document with exact `f64` round-trips.
//!
//! Everything is 64-bit; the networks this crate targets are tiny, so precision is
//! preferred over throughput. Pooling reductions use pairwise (tree) summation to
//! keep permutation-induced drift near machine epsilon.

mod adam;
mod checkpoint;
mod error;
mod layers;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, TensorEntry};
pub use error::NdError;
pub use layers::{
    Activation, Block, BoundBlock, BoundDense, BoundResidual, BoundStack, DenseLayer,
    Parameterized, ResidualBlock, Stack,
};
pub use tape::{Tape, Value};
pub use tensor::{pairwise_sum, Tensor};

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, NdError>;
