//! Batch experiments for the dmabeam toolkit: configuration, runners for
//! patterns, steering, coverage and efficiency sweeps, and run manifests.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
