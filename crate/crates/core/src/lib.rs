//! Sub-Nyquist spectral estimation.
//!
//! * [`multicoset`]: multi-coset sampler simulation and the correlogram
//!   estimate of per-segment average power.
//! * [`corranalysis`]: closed-form mean and covariance of that estimate for
//!   white Gaussian input.
//! * [`spectralcs`]: nested least-squares recovery of sinusoid mixtures from
//!   compressive measurements, with root-MUSIC frequency estimation and an
//!   SIHT baseline.
//! * [`crb`]: Fisher information and Cramér–Rao bound for the compressive model.
//! * [`experiments`]: seeded Monte Carlo drivers producing CSV result tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corranalysis;
pub mod crb;
pub mod experiments;
pub mod io;
pub mod multicoset;
pub mod numerics;
pub mod rng;
pub mod spectralcs;

pub use numerics::{ComplexMatrix, NumericsError, RealMatrix, C64};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("signal too short: need {required} samples, got {actual}")]
    Bounds { required: usize, actual: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("degenerate subspace: {found} admissible roots for model order {required}")]
    DegenerateSubspace { found: usize, required: usize },
    #[error("Cramér–Rao bound unavailable: {0}")]
    BoundUnavailable(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
