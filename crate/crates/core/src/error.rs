use std::io;

use thiserror::Error;

/// Errors raised by the inversion core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("layout mismatch: expected {expected}, found {found}")]
    Layout {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation became unstable at substep {substep}; check the CFL condition (dt_sim = {dt_sim:e} s, limit {limit:e} s)")]
    Instability {
        substep: usize,
        dt_sim: f64,
        limit: f64,
    },

    #[error("instance exceeds capacity: needs {needed} bytes, cap is {cap} bytes")]
    Capacity { needed: u64, cap: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing offline artifact: {0}")]
    State(&'static str),

    #[error("malformed archive: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
