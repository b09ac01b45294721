//! Numerical substrate for the FIOC toolkit.
//!
//! Dense nets and a GRU cell with hand-written backward passes, Adam over
//! flattened parameters, probability helpers, diagonal CEM and a binary
//! checkpoint container.

pub mod adam;
pub mod cem;
pub mod checkpoint;
pub mod dense;
pub mod gru;
pub mod params;
pub mod prob;

pub use adam::AdamState;
pub use cem::{cem_optimize, cem_optimize_with, CemConfig, CemOptions, CemOutcome};
pub use checkpoint::{read_checkpoint, write_checkpoint, Tensor};
pub use dense::{Activation, DenseCache, DenseNet};
pub use gru::{GruCache, GruCell};
pub use params::{flatten, join, load_tensors, num_params, tensors, unflatten, zeros_like, ParamVec, Parameters};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NumError>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(NumError::Dimension { what, expected, got });
    }
    Ok(())
}

/// Squared Euclidean norm.
pub fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Squared Euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `dst += scale * src`
pub fn axpy(dst: &mut [f64], scale: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}
