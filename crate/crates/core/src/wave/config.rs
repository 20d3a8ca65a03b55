use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DENSITY: f64 = 1000.0;
pub const DEFAULT_SOUND_SPEED: f64 = 1500.0;
pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Physical and numerical setup of the vertical-slice ocean model.
///
/// The domain is `[0, length] x [0, depth]` with the seafloor at `z = 0`
/// and the free surface at `z = depth`. Nodes sit on a uniform collocated
/// grid; every bottom node is a parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    /// Domain length L (m).
    pub length: f64,
    /// Water depth H (m).
    pub depth: f64,
    pub hx: f64,
    pub hz: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    /// Bulk modulus (Pa); defaults to `ρ c²` with c = 1500 m/s.
    #[serde(default)]
    pub bulk_modulus: Option<f64>,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Impedance condition `u·n = p / (ρ c)` on the lateral walls when
    /// true; rigid walls (`u·n = 0`) otherwise.
    #[serde(default = "default_true")]
    pub absorbing: bool,
    /// Observation interval (s).
    pub dt_obs: f64,
    /// Simulation substeps per observation interval.
    pub substeps: usize,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
    /// Sensor x-positions on the seafloor (m).
    pub sensors: Vec<f64>,
    /// Forecast x-positions on the surface (m).
    pub qoi: Vec<f64>,
}

fn default_density() -> f64 {
    DEFAULT_DENSITY
}
fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}
fn default_true() -> bool {
    true
}
fn default_cfl() -> f64 {
    0.5
}

impl WaveConfig {
    /// A grid of `nx x nz` nodes spaced `h` with default seawater
    /// constants and the given sensor and forecast node indices.
    pub fn uniform(
        nx: usize,
        nz: usize,
        h: f64,
        dt_obs: f64,
        substeps: usize,
        sensor_nodes: &[usize],
        qoi_nodes: &[usize],
    ) -> Self {
        Self {
            length: (nx - 1) as f64 * h,
            depth: (nz - 1) as f64 * h,
            hx: h,
            hz: h,
            density: DEFAULT_DENSITY,
            bulk_modulus: None,
            gravity: DEFAULT_GRAVITY,
            absorbing: true,
            dt_obs,
            substeps,
            cfl_factor: 0.5,
            sensors: sensor_nodes.iter().map(|&i| i as f64 * h).collect(),
            qoi: qoi_nodes.iter().map(|&i| i as f64 * h).collect(),
        }
    }

    pub fn bulk(&self) -> f64 {
        self.bulk_modulus
            .unwrap_or(self.density * DEFAULT_SOUND_SPEED * DEFAULT_SOUND_SPEED)
    }

    pub fn sound_speed(&self) -> f64 {
        (self.bulk() / self.density).sqrt()
    }

    /// `Z^{-1} = 1 / (ρ c)` on absorbing walls, zero on rigid ones.
    pub fn impedance_inv(&self) -> f64 {
        if self.absorbing {
            1.0 / (self.density * self.sound_speed())
        } else {
            0.0
        }
    }

    pub fn dt_sim(&self) -> f64 {
        self.dt_obs / self.substeps as f64
    }

    /// Largest admissible `dt_sim` under the configured CFL factor.
    pub fn dt_limit(&self) -> f64 {
        self.cfl_factor * self.hx.min(self.hz) / self.sound_speed()
    }

    pub fn nx(&self) -> usize {
        (self.length / self.hx).round() as usize + 1
    }

    pub fn nz(&self) -> usize {
        (self.depth / self.hz).round() as usize + 1
    }

    /// Nearest bottom node to each sensor.
    pub fn sensor_nodes(&self) -> Vec<usize> {
        self.sensors.iter().map(|&x| self.snap(x)).collect()
    }

    /// Nearest surface node to each forecast location.
    pub fn qoi_nodes(&self) -> Vec<usize> {
        self.qoi.iter().map(|&x| self.snap(x)).collect()
    }

    fn snap(&self, x: f64) -> usize {
        ((x / self.hx).round() as usize).min(self.nx() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("depth", self.depth),
            ("hx", self.hx),
            ("hz", self.hz),
            ("density", self.density),
            ("gravity", self.gravity),
            ("dt_obs", self.dt_obs),
            ("bulk_modulus", self.bulk()),
            ("cfl_factor", self.cfl_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("wave.{name} must be positive, got {v}")));
            }
        }
        for (name, extent, h) in [("length", self.length, self.hx), ("depth", self.depth, self.hz)] {
            let cells = extent / h;
            if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
                return Err(Error::Config(format!(
                    "wave.{name} = {extent} is not a whole number of cells of {h}"
                )));
            }
            if cells.round() < 2.0 {
                return Err(Error::Config(format!("wave.{name} needs at least 2 cells")));
            }
        }
        if self.substeps == 0 {
            return Err(Error::Config("wave.substeps must be at least 1".into()));
        }
        if self.cfl_factor > 0.5 {
            return Err(Error::Config(format!(
                "wave.cfl_factor must not exceed 0.5, got {}",
                self.cfl_factor
            )));
        }
        if self.dt_sim() > self.dt_limit() * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "CFL violated: dt_sim = dt_obs / substeps = {:e} s exceeds {:e} s",
                self.dt_sim(),
                self.dt_limit()
            )));
        }
        if self.sensors.is_empty() {
            return Err(Error::Config("wave.sensors must list at least one position".into()));
        }
        if self.qoi.is_empty() {
            return Err(Error::Config("wave.qoi must list at least one position".into()));
        }
        for (name, list) in [("sensors", &self.sensors), ("qoi", &self.qoi)] {
            if let Some(x) = list.iter().find(|&&x| !(0.0..=self.length).contains(&x)) {
                return Err(Error::Config(format!(
                    "wave.{name} position {x} lies outside [0, {}]",
                    self.length
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> WaveConfig {
        WaveConfig::uniform(64, 32, 50.0, 0.1, 8, &[4, 20, 40, 60], &[10, 50])
    }

    #[test]
    fn defaults_are_seawater() {
        let c = cfg();
        assert_eq!(c.sound_speed(), 1500.0);
        assert_eq!(c.bulk(), 2.25e9);
        assert_eq!(c.impedance_inv(), 1.0 / 1.5e6);
        assert_eq!((c.nx(), c.nz()), (64, 32));
        c.validate().unwrap();
    }

    #[test]
    fn cfl_violation_is_reported() {
        let mut c = cfg();
        c.substeps = 2;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("CFL"), "{err}");
        c.substeps = 8;
        c.cfl_factor = 0.6;
        assert!(c.validate().is_err());
    }

    #[test]
    fn positions_must_be_inside() {
        let mut c = cfg();
        c.sensors.push(1e6);
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.qoi.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn snapping() {
        let mut c = cfg();
        c.sensors = vec![0.0, 74.0, 76.0, 3150.0];
        assert_eq!(c.sensor_nodes(), vec![0, 1, 2, 63]);
    }
}
