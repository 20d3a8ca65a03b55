//! Command-line workflow for offline-online Bayesian inversion: synthetic
//! data, offline operator precomputation, online inference, benchmarks
//! and an oracle suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

#[cfg(test)]
mod fixtures;

pub use commands::Options;
pub use config::RunConfig;
pub use error::{CliError, Result};
