//! Run configuration read from a TOML file.
//!
//! ```toml
//! [wave]
//! length = 3150.0
//! depth = 1550.0
//! hx = 50.0
//! hz = 50.0
//! dt_obs = 0.1
//! substeps = 8
//! sensors = [500.0, 1500.0, 2500.0]
//! qoi = [1000.0, 2000.0]
//!
//! [prior]
//! delta = 1.0
//!
//! [noise]
//! rel = 0.01
//! seed = 7
//!
//! [truth]
//! center = 1600.0
//! width = 300.0
//! rise_time = 1.0
//! amplitude = 1.0
//!
//! [dims]
//! n_time = 32
//! ```

use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use ltibayes_core::bayes::Assembly;
use ltibayes_core::wave::{BumpParams, WaveConfig};
use ltibayes_core::{Dims, PriorOp};
use serde::{Deserialize, Serialize};
use std::hash::Hasher;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub wave: WaveConfig,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub truth: BumpParams,
    pub dims: DimsSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub offline: OfflineSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// Laplacian weight; `(4 hx)^2` when omitted.
    pub gamma: Option<f64>,
    #[serde(default = "one")]
    pub delta: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self { gamma: None, delta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Noise standard deviation relative to the largest clean datum.
    #[serde(default = "one_percent")]
    pub rel: f64,
    #[serde(default)]
    pub seed: u64,
    /// Absolute noise standard deviation for the offline phase. When
    /// absent, `offline` reads the value written by `simulate`.
    pub sigma: Option<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { rel: 0.01, seed: 0, sigma: None }
    }
}

/// Only `n_time` is required; the other counts follow from `[wave]` and
/// are checked against it when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsSection {
    pub n_time: usize,
    pub n_space: Option<usize>,
    pub n_sensors: Option<usize>,
    pub n_qoi: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default = "default_artifacts")]
    pub artifacts: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { artifacts: default_artifacts() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Time-step counts of the matvec sweep.
    #[serde(default = "default_sweep")]
    pub n_time: Vec<usize>,
    #[serde(default = "four")]
    pub n_space: usize,
    #[serde(default = "four")]
    pub n_sensors: usize,
    #[serde(default = "three")]
    pub reps: usize,
    /// Also time a CG solve of the normal equations on the `[wave]`
    /// instance.
    #[serde(default = "yes")]
    pub cg: bool,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            n_time: default_sweep(),
            n_space: 4,
            n_sensors: 4,
            reps: 3,
            cg: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssemblyChoice {
    #[default]
    Columns,
    Fused,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineSection {
    #[serde(default)]
    pub assembly: AssemblyChoice,
}

fn one() -> f64 {
    1.0
}
fn one_percent() -> f64 {
    0.01
}
fn three() -> usize {
    3
}
fn four() -> usize {
    4
}
fn yes() -> bool {
    true
}
fn default_artifacts() -> PathBuf {
    PathBuf::from("artifacts")
}
fn default_sweep() -> Vec<usize> {
    vec![256, 1024, 8192]
}

impl AssemblyChoice {
    pub fn assembly(self) -> Assembly {
        match self {
            AssemblyChoice::Columns => Assembly::Columns,
            AssemblyChoice::Fused => Assembly::Fused,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.wave.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let (nx, nd, nq) = (self.wave.nx(), self.wave.sensors.len(), self.wave.qoi.len());
        for (name, given, actual) in [
            ("dims.n_space", self.dims.n_space, nx),
            ("dims.n_sensors", self.dims.n_sensors, nd),
            ("dims.n_qoi", self.dims.n_qoi, nq),
        ] {
            if let Some(g) = given {
                if g != actual {
                    return Err(CliError::Config(format!(
                        "{name} = {g} disagrees with [wave], which gives {actual}"
                    )));
                }
            }
        }
        if self.dims.n_time == 0 {
            return Err(CliError::Config("dims.n_time must be at least 1".into()));
        }
        if let Some(g) = self.prior.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(CliError::Config(format!("prior.gamma must be non-negative, got {g}")));
            }
        }
        if !(self.prior.delta > 0.0 && self.prior.delta.is_finite()) {
            return Err(CliError::Config(format!("prior.delta must be positive, got {}", self.prior.delta)));
        }
        if !(self.noise.rel >= 0.0 && self.noise.rel.is_finite()) {
            return Err(CliError::Config(format!("noise.rel must be non-negative, got {}", self.noise.rel)));
        }
        if let Some(s) = self.noise.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::Config(format!("noise.sigma must be positive, got {s}")));
            }
        }
        if !(self.truth.width > 0.0) {
            return Err(CliError::Config(format!("truth.width must be positive, got {}", self.truth.width)));
        }
        if !(self.truth.rise_time > 0.0) {
            return Err(CliError::Config(format!(
                "truth.rise_time must be positive, got {}",
                self.truth.rise_time
            )));
        }
        if self.bench.n_time.iter().any(|&n| n == 0) {
            return Err(CliError::Config("bench.n_time entries must be at least 1".into()));
        }
        if self.bench.n_space == 0 || self.bench.n_sensors == 0 || self.bench.reps == 0 {
            return Err(CliError::Config("bench.n_space, bench.n_sensors and bench.reps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n_space: self.wave.nx(),
            n_sensors: self.wave.sensors.len(),
            n_qoi: self.wave.qoi.len(),
            n_time: self.dims.n_time,
            dt_obs: self.wave.dt_obs,
        }
    }

    pub fn prior_gamma(&self) -> f64 {
        self.prior.gamma.unwrap_or((4.0 * self.wave.hx).powi(2))
    }

    pub fn build_prior(&self) -> Result<PriorOp> {
        Ok(PriorOp::build(self.wave.nx(), self.wave.hx, self.prior_gamma(), self.prior.delta)?)
    }

    /// Hash of everything the offline artifacts depend on.
    pub fn offline_hash(&self, sigma: f64) -> u64 {
        #[derive(Serialize)]
        struct Key<'a> {
            wave: &'a WaveConfig,
            gamma: f64,
            delta: f64,
            n_time: usize,
            sigma_bits: String,
            assembly: AssemblyChoice,
        }
        let key = Key {
            wave: &self.wave,
            gamma: self.prior_gamma(),
            delta: self.prior.delta,
            n_time: self.dims.n_time,
            sigma_bits: format!("{:016x}", sigma.to_bits()),
            assembly: self.offline.assembly,
        };
        let text = toml::to_string(&key).expect("hash key serializes");
        let mut h = FnvHasher::default();
        h.write(text.as_bytes());
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::SMALL;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.dims().n_space, 24);
        assert_eq!(cfg.dims().n_sensors, 4);
        assert_eq!(cfg.prior_gamma(), 40_000.0);
        assert_eq!(cfg.noise.rel, 0.01);
        assert_eq!(cfg.paths.artifacts, PathBuf::from("artifacts"));
        assert_eq!(cfg.offline.assembly, AssemblyChoice::Columns);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = SMALL.replace("n_time = 12", "n_time = 12\nn_sensors = 3");
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("dims.n_sensors"), "{err}");
        let bad = SMALL.replace("hx = 50.0", "hx = -50.0");
        assert!(RunConfig::parse(&bad).unwrap_err().to_string().contains("wave.hx"));
        let bad = SMALL.replace("width = 150.0", "width = 0.0");
        assert!(RunConfig::parse(&bad).unwrap_err().to_string().contains("truth.width"));
        let bad = format!("{SMALL}\n[noise]\nrel = -1.0\n");
        assert!(RunConfig::parse(&bad).unwrap_err().to_string().contains("noise.rel"));
        let bad = SMALL.replace("substeps = 8", "substeps = 1");
        assert!(RunConfig::parse(&bad).unwrap_err().to_string().contains("CFL"));
        let bad = format!("{SMALL}\n[extra]\nx = 1\n");
        assert!(RunConfig::parse(&bad).unwrap_err().to_string().contains("extra"));
    }

    #[test]
    fn hash_tracks_offline_inputs_only() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        let h = cfg.offline_hash(0.5);
        assert_eq!(h, cfg.offline_hash(0.5));
        assert_ne!(h, cfg.offline_hash(0.25));
        let mut other = cfg.clone();
        other.truth.amplitude = 2.0;
        other.noise.seed = 99;
        assert_eq!(other.offline_hash(0.5), h);
        other.wave.substeps = 9;
        assert_ne!(other.offline_hash(0.5), h);
    }
}
