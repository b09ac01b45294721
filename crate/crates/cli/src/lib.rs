//! Experiment pipeline: configuration, seeding, the pipeline commands and
//! their CSV reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod seeds;

pub use commands::Context;
pub use error::{CliError, Result};
