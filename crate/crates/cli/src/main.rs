use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ltibayes_cli::commands::{self, Options};
use ltibayes_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "ltibayes", version, about = "Offline-online Bayesian inversion for LTI wave models")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Artifact and output directory (overrides [paths] artifacts).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed (overrides [noise] seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the truth, clean data, QoI and noisy observations.
    Simulate,
    /// Precompute kernels, K, its factor, Q and the QoI covariance.
    Offline,
    /// Infer the MAP point and forecast QoI from observed data.
    Infer {
        /// Observed data (.f64 with a .hdr sidecar); defaults to <out>/d_obs.f64.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Hutchinson probes for pointwise displacement std (0 skips it).
        #[arg(long, default_value_t = 0)]
        probes: usize,
        /// Credible level of the forecast intervals.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Time FFT vs dense matvecs and online inference vs CG.
    Bench,
    /// Run the oracle suite on built-in instances.
    Verify {
        /// Replace the adjoint by the block-transposed kernel (negative control).
        #[arg(long)]
        debug_transpose: bool,
    },
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("LTIBAYES_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("LTIBAYES_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(CliError::Config("LTIBAYES_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    init_threads()?;
    let mut opts = Options { out: cli.out, seed: cli.seed, ..Default::default() };
    let config = || -> Result<RunConfig, CliError> {
        let path = cli
            .config
            .as_deref()
            .ok_or_else(|| CliError::Config("--config <path> is required for this command".into()))?;
        RunConfig::load(path)
    };
    match cli.command {
        Command::Simulate => {
            commands::simulate(&config()?, &opts)?;
        }
        Command::Offline => {
            commands::offline(&config()?, &opts)?;
        }
        Command::Infer { data, probes, level } => {
            if !(level > 0.0 && level < 1.0) {
                return Err(CliError::Config(format!("--level must lie in (0, 1), got {level}")));
            }
            opts.data = data;
            opts.probes = probes;
            opts.level = level;
            commands::infer(&config()?, &opts)?;
        }
        Command::Bench => {
            commands::bench(&config()?, &opts)?;
        }
        Command::Verify { debug_transpose } => {
            opts.debug_transpose = debug_transpose;
            return Ok(commands::verify(&opts)?.all_passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
