//! Spectral simulation of passive scalars advected by white-in-time random
//! shear flows on the 2D and 3D torus, together with the diagnostics and
//! structural checks used to study their dissipation and mixing rates.

// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod fft;
pub mod grid;
pub mod initial;
pub mod integrators;
pub mod io;
pub mod lagrangian;
pub mod models;
pub mod noise;
pub mod spectral;
pub mod stats;
pub mod theory;

pub use spectral::{Dimension, GridField, ModeIndex, SpectralField};

/// Errors raised by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("grid of size {grid} cannot represent cutoff {cutoff} without aliasing")]
    Aliasing { grid: usize, cutoff: usize },
    #[error("step-size instability at t = {time}: a coefficient grew by {growth:.3e} in one step")]
    Instability { time: f64, growth: f64 },
    #[error("numerical abort at t = {0}: NaN or infinity in the state")]
    NumericalAbort(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
