//! Sparse chromatographic signal restoration.
//!
//! The crate covers the whole experimental loop:
//!
//! - [`sigmodel`]: Fraser-Suzuki peak kernels, seeded spike trains, degraded
//!   observations and the D0-D6 benchmark presets with their on-disk format.
//! - [`operators`]: the forward map `H = G ∘ Kπ` (peak convolution followed by
//!   Gaussian blur), its adjoint and a power-iteration norm estimate.
//! - [`solvers`]: classical ISTA, Chambolle-Pock primal-dual and
//!   half-quadratic solvers for the three restoration problems.
//! - [`unrolled`]: K-layer unrolled versions of the same iterations with
//!   per-layer learnable hyperparameters, hand-written reverse mode and an
//!   Adam trainer.
//! - [`metrics`]: MSE / SNR / truncated SNR plus per-peak height-area-location
//!   (HAL) scoring on oracle supports.
//! - [`cli`]: the `gen`, `train`, `eval` and `report` commands.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod metrics;
pub mod operators;
pub mod sigmodel;
pub mod solvers;
pub mod unrolled;

pub use error::{Error, Result};
