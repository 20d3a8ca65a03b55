//! The five subcommands. Each returns a report value so tests can inspect
//! what the command printed and wrote.

pub mod bench;
pub mod infer;
pub mod offline;
pub mod simulate;
pub mod verify;

use std::path::{Path, PathBuf};

use crate::config::RunConfig;

pub use bench::{bench, BenchReport, BenchRow};
pub use infer::{infer, InferReport};
pub use offline::{offline, OfflineReport};
pub use simulate::{simulate, SimulateReport};
pub use verify::{energy_drift_ratio, verify, Check, VerifyReport};

/// Artifact file names written by `offline`.
pub mod names {
    pub const F: &str = "F.btpz";
    pub const FQ: &str = "Fq.btpz";
    pub const GSTAR: &str = "Gstar.btpz";
    pub const GQSTAR: &str = "Gqstar.btpz";
    pub const K: &str = "K.dnsm";
    pub const K_CHOL: &str = "K_chol.dnsm";
    pub const Q: &str = "Q.dnsm";
    pub const GAMMA_POST_Q: &str = "gamma_post_q.dnsm";
    pub const SIGMA: &str = "noise_sigma.txt";
}

/// Flags shared across subcommands.
#[derive(Debug, Clone)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub probes: usize,
    pub level: f64,
    pub debug_transpose: bool,
    pub data: Option<PathBuf>,
    /// Suppress the human-readable summary on stdout.
    pub quiet: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            out: None,
            seed: None,
            probes: 0,
            level: 0.95,
            debug_transpose: false,
            data: None,
            quiet: false,
        }
    }
}

impl Options {
    pub fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.paths.artifacts.clone())
    }

    pub(crate) fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> crate::error::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::CliError::io(dir, e))
}
