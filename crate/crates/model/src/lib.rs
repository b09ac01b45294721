//! Factored object-centric world model: per-slot latent encoder and decoder,
//! static/dynamic factorization, graph-conditioned latent dynamics, reward
//! head, interaction-graph inference and linear probing.

pub mod interaction;
pub mod probe;
pub mod transition;
pub mod wm;

pub use interaction::{nshd, GraphEstimate, Regime, SoftGraph};
pub use probe::{linear_probe, probe_table, ProbeCell, ProbeFeatures, ProbeReport, ProbeTarget};
pub use transition::{Gaussian, Transition};
pub use wm::{
    train_world_model, Carry, Encoded, GraphSource, LossBreakdown, LossWeights, TrainConfig, TrainOutcome, Window,
    WindowNoise, WmConfig, WorldModel,
};

use fioc_numkit::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence {
        epoch: usize,
        reason: String,
        /// Parameters from the last finite epoch.
        last_good: Box<WorldModel>,
    },
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(ModelError::Dimension { what, expected, got });
    }
    Ok(())
}
