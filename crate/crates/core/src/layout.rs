//! Problem dimensions and the space/time vector layouts shared by every
//! operator in the crate.
//!
//! A space-time vector holds `rows * n_time` values, where `rows` is the
//! number of spatial parameter points, sensors, or QoI locations. Two
//! storage orders are supported:
//!
//! * [`Layout::TimeMajorBlocks`]: the time blocks `v_1, ..., v_{N_t}` are
//!   stacked, each block holding one value per row.
//! * [`Layout::SpaceMajorRows`]: each row's time series is contiguous. This
//!   is the order the FFT matvec consumes and produces.

use std::fmt;
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts that size every vector and operator in an inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub n_space: usize,
    pub n_sensors: usize,
    pub n_qoi: usize,
    pub n_time: usize,
    /// Observation interval in seconds.
    pub dt_obs: f64,
}

impl Dims {
    pub fn new(
        n_space: usize,
        n_sensors: usize,
        n_qoi: usize,
        n_time: usize,
        dt_obs: f64,
    ) -> Result<Self> {
        let dims = Self {
            n_space,
            n_sensors,
            n_qoi,
            n_time,
            dt_obs,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_space == 0 || self.n_sensors == 0 || self.n_qoi == 0 || self.n_time == 0 {
            return Err(Error::Config(format!(
                "all counts must be at least 1 (n_space={}, n_sensors={}, n_qoi={}, n_time={})",
                self.n_space, self.n_sensors, self.n_qoi, self.n_time
            )));
        }
        if self.n_sensors > self.n_space {
            return Err(Error::Config(format!(
                "n_sensors ({}) may not exceed n_space ({})",
                self.n_sensors, self.n_space
            )));
        }
        if !(self.dt_obs > 0.0 && self.dt_obs.is_finite()) {
            return Err(Error::Config(format!("dt_obs must be positive, got {}", self.dt_obs)));
        }
        Ok(())
    }

    pub fn param_len(&self) -> usize {
        self.n_space * self.n_time
    }

    pub fn data_len(&self) -> usize {
        self.n_sensors * self.n_time
    }

    pub fn qoi_len(&self) -> usize {
        self.n_qoi * self.n_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    TimeMajorBlocks,
    SpaceMajorRows,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::TimeMajorBlocks => "TimeMajorBlocks",
            Layout::SpaceMajorRows => "SpaceMajorRows",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TimeMajorBlocks" => Ok(Layout::TimeMajorBlocks),
            "SpaceMajorRows" => Ok(Layout::SpaceMajorRows),
            other => Err(Error::Format(format!("unknown layout '{other}'"))),
        }
    }
}

/// Marker for what the rows of a [`Series`] index.
pub trait SeriesKind: Clone + fmt::Debug + Send + Sync + 'static {
    const NAME: &'static str;
}

/// Rows are spatial parameter points (seafloor velocity, m/s).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Param;
/// Rows are seafloor pressure sensors (Pa).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Obs;
/// Rows are surface forecast locations (m).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Qoi;

impl SeriesKind for Param {
    const NAME: &'static str = "param";
}
impl SeriesKind for Obs {
    const NAME: &'static str = "obs";
}
impl SeriesKind for Qoi {
    const NAME: &'static str = "qoi";
}

/// A `rows x n_time` space-time vector tagged with its storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<K> {
    values: Vec<f64>,
    rows: usize,
    n_time: usize,
    layout: Layout,
    _kind: PhantomData<K>,
}

pub type SpaceTimeField = Series<Param>;
pub type ObsSeries = Series<Obs>;
pub type QoISeries = Series<Qoi>;

impl<K: SeriesKind> Series<K> {
    pub fn new(values: Vec<f64>, rows: usize, n_time: usize, layout: Layout) -> Result<Self> {
        if rows == 0 || n_time == 0 {
            return Err(Error::Dimension(format!(
                "{} series needs rows >= 1 and n_time >= 1, got {rows} x {n_time}",
                K::NAME
            )));
        }
        if values.len() != rows * n_time {
            return Err(Error::Dimension(format!(
                "{} series expects {rows} x {n_time} = {} values, got {}",
                K::NAME,
                rows * n_time,
                values.len()
            )));
        }
        Ok(Self {
            values,
            rows,
            n_time,
            layout,
            _kind: PhantomData,
        })
    }

    pub fn zeros(rows: usize, n_time: usize, layout: Layout) -> Self {
        Self {
            values: vec![0.0; rows * n_time],
            rows,
            n_time,
            layout,
            _kind: PhantomData,
        }
    }

    /// Builds a series from `f(row, t)` with 0-based indices.
    pub fn from_fn(
        rows: usize,
        n_time: usize,
        layout: Layout,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut s = Self::zeros(rows, n_time, layout);
        for r in 0..rows {
            for t in 0..n_time {
                let idx = s.index(r, t);
                s.values[idx] = f(r, t);
            }
        }
        s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat index of `(row, t)` (0-based) under the current layout.
    #[inline]
    pub fn index(&self, row: usize, t: usize) -> usize {
        match self.layout {
            Layout::SpaceMajorRows => row * self.n_time + t,
            Layout::TimeMajorBlocks => t * self.rows + row,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, t: usize) -> f64 {
        self.values[self.index(row, t)]
    }

    /// Checks the row and time counts against the expected ones.
    pub fn check_shape(&self, rows: usize, n_time: usize) -> Result<()> {
        if self.rows != rows || self.n_time != n_time {
            return Err(Error::Dimension(format!(
                "{} series is {} x {}, expected {rows} x {n_time}",
                K::NAME,
                self.rows,
                self.n_time
            )));
        }
        Ok(())
    }

    pub fn require_layout(&self, layout: Layout) -> Result<()> {
        if self.layout != layout {
            return Err(Error::Layout {
                expected: layout.name(),
                found: self.layout.name(),
            });
        }
        Ok(())
    }

    /// Permutes storage into `target` order. The permutation moves values
    /// without arithmetic, so round trips are exact.
    pub fn reindex(&self, target: Layout) -> Self {
        if target == self.layout {
            return self.clone();
        }
        let (rows, nt) = (self.rows, self.n_time);
        let mut out = vec![0.0; self.values.len()];
        match target {
            Layout::SpaceMajorRows => {
                for t in 0..nt {
                    for r in 0..rows {
                        out[r * nt + t] = self.values[t * rows + r];
                    }
                }
            }
            Layout::TimeMajorBlocks => {
                for r in 0..rows {
                    for t in 0..nt {
                        out[t * rows + r] = self.values[r * nt + t];
                    }
                }
            }
        }
        Self {
            values: out,
            rows,
            n_time: nt,
            layout: target,
            _kind: PhantomData,
        }
    }

    /// Reinterprets the values as another kind with the same shape.
    pub fn cast<J: SeriesKind>(self) -> Series<J> {
        Series {
            values: self.values,
            rows: self.rows,
            n_time: self.n_time,
            layout: self.layout,
            _kind: PhantomData,
        }
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        other.check_shape(self.rows, self.n_time)?;
        let other = other.reindex(self.layout);
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= alpha);
        s
    }

    /// `self + alpha * other`, in `self`'s layout.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        other.check_shape(self.rows, self.n_time)?;
        let other = other.reindex(self.layout);
        let mut s = self.clone();
        for (a, b) in s.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(s)
    }
}

/// Reorders `v` into `target`, checking its shape against `rows x n_time`.
pub fn reindex<K: SeriesKind>(
    v: &Series<K>,
    rows: usize,
    n_time: usize,
    target: Layout,
) -> Result<Series<K>> {
    v.check_shape(rows, n_time)?;
    Ok(v.reindex(target))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖a - b‖ / ‖b‖`, or the absolute difference when `b` vanishes.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(b);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
