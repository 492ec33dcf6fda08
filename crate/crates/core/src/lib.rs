//! Pseudo-knockoff filter for variable selection with false discovery rate
//! control in fixed-design Gaussian linear models.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: symmetric dense linear algebra on top of `nalgebra`.
//! * [`datagen`]: covariance models, designs, sparse signals and responses.
//! * [`construct`]: orthogonal, block-diagonal and general pseudo-knockoff
//!   matrices, and the classical knockoff baselines.
//! * [`stats`]: least-squares split, half-Lasso solver, W statistics.
//! * [`select`]: knockoff+ threshold and evaluation metrics.
//! * [`theory`]: numerical verifiers for the FDP bounds.
//! * [`simharness`]: seeded experiment sweeps and their outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(a > b)` also rejects NaN
pub mod construct;
pub mod datagen;
pub mod error;
pub mod numerics;
pub mod parallel;
pub mod rng;
pub mod select;
pub mod simharness;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
