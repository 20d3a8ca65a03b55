//! Semi-discrete acoustic-gravity operator, RK4 time stepping, and its
//! exact discrete adjoint.
//!
//! Unknowns live on a collocated `nx x nz` node grid: velocities `u_x`,
//! `u_z` and pressure `p` at every node, surface height `η` at every
//! surface node. Spatial derivatives use the second-order
//! summation-by-parts first-derivative operator (central in the interior,
//! one-sided at the ends, trapezoidal norm). Boundary conditions enter
//! weakly through penalty terms chosen so that, for rigid walls and no
//! forcing, the discrete energy
//!
//! ```text
//! E = 1/2 Σ w_ij (ρ|u|² + p²/K) + 1/2 Σ w_i ρ g η²
//! ```
//!
//! is exactly conserved by the semi-discrete system. The lateral impedance
//! condition only removes energy; bottom forcing `m` does work `Σ w_i p m`.
//!
//! The semi-discrete system is `y' = A y + B m`. One RK4 step with the
//! forcing held constant is linear in `(y, m)`; [`WaveSolver::adjoint_step`]
//! is its transpose, obtained by running the four stages backwards with
//! `A^T`. Dot-product tests therefore close to rounding error.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use sprs::{CsMat, TriMat};

use super::config::WaveConfig;
use crate::error::{Error, Result};
use crate::kernel::{BlockToeplitzKernel, Provenance};
use crate::layout::{Layout, ObsSeries, QoISeries, SpaceTimeField};

static SOLVER_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of wave-solver entry points invoked in this process (steps,
/// forward and adjoint runs).
pub fn solver_invocations() -> u64 {
    SOLVER_CALLS.load(Ordering::Relaxed)
}

fn count_call() {
    SOLVER_CALLS.fetch_add(1, Ordering::Relaxed);
}

/// Discrete `(u_x, u_z, p, η)` fields, stored as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    nx: usize,
    nz: usize,
    values: Vec<f64>,
}

impl WaveState {
    pub fn zeros(nx: usize, nz: usize) -> Self {
        Self {
            nx,
            nz,
            values: vec![0.0; 3 * nx * nz + nx],
        }
    }

    pub fn from_values(nx: usize, nz: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 3 * nx * nz + nx {
            return Err(Error::Dimension(format!(
                "state vector has {} values, a {nx}x{nz} grid needs {}",
                values.len(),
                3 * nx * nz + nx
            )));
        }
        Ok(Self { nx, nz, values })
    }

    fn nodes(&self) -> usize {
        self.nx * self.nz
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    /// Node `(i, j)` with `j = 0` on the seafloor.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ux(&self) -> &[f64] {
        &self.values[..self.nodes()]
    }

    pub fn uz(&self) -> &[f64] {
        &self.values[self.nodes()..2 * self.nodes()]
    }

    pub fn p(&self) -> &[f64] {
        &self.values[2 * self.nodes()..3 * self.nodes()]
    }

    pub fn eta(&self) -> &[f64] {
        &self.values[3 * self.nodes()..]
    }

    pub fn p_mut(&mut self) -> &mut [f64] {
        let n = self.nodes();
        &mut self.values[2 * n..3 * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= alpha);
        s
    }
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Assembled forward model for one [`WaveConfig`].
#[derive(Debug, Clone)]
pub struct WaveSolver {
    cfg: WaveConfig,
    nx: usize,
    nz: usize,
    op: CsMat<f64>,
    op_t: CsMat<f64>,
    /// Coefficient of `m_i` in the pressure equation at bottom node `i`.
    forcing_gain: f64,
    sensors: Vec<usize>,
    qoi: Vec<usize>,
}

fn spmv(m: &CsMat<f64>, x: &[f64], y: &mut [f64]) {
    let indptr = m.indptr();
    let ptr = indptr.raw_storage();
    let idx = m.indices();
    let val = m.data();
    for (r, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in ptr[r]..ptr[r + 1] {
            acc += val[k] * x[idx[k]];
        }
        *out = acc;
    }
}

impl WaveSolver {
    pub fn new(cfg: &WaveConfig) -> Result<Self> {
        cfg.validate()?;
        let (nx, nz) = (cfg.nx(), cfg.nz());
        let n = nx * nz;
        let n_state = 3 * n + nx;
        let (ux, uz, pr, eta) = (0, n, 2 * n, 3 * n);
        let node = |i: usize, j: usize| j * nx + i;

        let rho = cfg.density;
        let bulk = cfg.bulk();
        let g = cfg.gravity;
        let zinv = cfg.impedance_inv();
        let (hx, hz) = (cfg.hx, cfg.hz);
        // Boundary quadrature weights of the trapezoidal norm.
        let (wx, wz) = (hx / 2.0, hz / 2.0);

        // SBP first derivative along one axis: (neighbour offsets, weights).
        let deriv = |k: usize, len: usize, h: f64| -> [(isize, f64); 2] {
            if k == 0 {
                [(1, 1.0 / h), (0, -1.0 / h)]
            } else if k == len - 1 {
                [(0, 1.0 / h), (-1, -1.0 / h)]
            } else {
                [(1, 0.5 / h), (-1, -0.5 / h)]
            }
        };

        let mut tri = TriMat::new((n_state, n_state));
        for j in 0..nz {
            for i in 0..nx {
                let row = node(i, j);
                for (off, w) in deriv(i, nx, hx) {
                    let col = node((i as isize + off) as usize, j);
                    // ρ u_x' = -∂x p ;  p' = -K ∂x u_x
                    tri.add_triplet(ux + row, pr + col, -w / rho);
                    tri.add_triplet(pr + row, ux + col, -bulk * w);
                }
                for (off, w) in deriv(j, nz, hz) {
                    let col = node(i, (j as isize + off) as usize);
                    tri.add_triplet(uz + row, pr + col, -w / rho);
                    tri.add_triplet(pr + row, uz + col, -bulk * w);
                }
                // Lateral walls: u·n = Z^{-1} p.
                if i == 0 {
                    tri.add_triplet(pr + row, ux + row, -bulk / wx);
                    tri.add_triplet(pr + row, pr + row, -bulk * zinv / wx);
                }
                if i == nx - 1 {
                    tri.add_triplet(pr + row, ux + row, bulk / wx);
                    tri.add_triplet(pr + row, pr + row, -bulk * zinv / wx);
                }
                // Seafloor: u·n = -m; the m part lives in `forcing_gain`.
                if j == 0 {
                    tri.add_triplet(pr + row, uz + row, -bulk / wz);
                }
                // Free surface: p = ρ g η imposed on the vertical momentum,
                // and η' = u·n.
                if j == nz - 1 {
                    tri.add_triplet(uz + row, pr + row, 1.0 / (rho * wz));
                    tri.add_triplet(uz + row, eta + i, -g / wz);
                    tri.add_triplet(eta + i, uz + row, 1.0);
                }
            }
        }
        let op: CsMat<f64> = tri.to_csr();
        let mut tri_t = TriMat::new((n_state, n_state));
        for (v, (r, c)) in op.iter() {
            tri_t.add_triplet(c, r, *v);
        }
        let op_t: CsMat<f64> = tri_t.to_csr();

        Ok(Self {
            cfg: cfg.clone(),
            nx,
            nz,
            op,
            op_t,
            forcing_gain: bulk / wz,
            sensors: cfg.sensor_nodes(),
            qoi: cfg.qoi_nodes(),
        })
    }

    pub fn config(&self) -> &WaveConfig {
        &self.cfg
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    /// Number of parameter points (bottom nodes).
    pub fn n_space(&self) -> usize {
        self.nx
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn n_qoi(&self) -> usize {
        self.qoi.len()
    }

    pub fn n_state(&self) -> usize {
        3 * self.nx * self.nz + self.nx
    }

    pub fn sensor_nodes(&self) -> &[usize] {
        &self.sensors
    }

    pub fn qoi_nodes(&self) -> &[usize] {
        &self.qoi
    }

    fn p_offset(&self) -> usize {
        2 * self.nx * self.nz
    }

    fn eta_offset(&self) -> usize {
        3 * self.nx * self.nz
    }

    /// Semi-discrete operator `A` as a sparse matrix.
    pub fn operator(&self) -> &CsMat<f64> {
        &self.op
    }

    /// `out = A y + B m`.
    fn rhs(&self, y: &[f64], forcing: &[f64], out: &mut [f64]) {
        spmv(&self.op, y, out);
        let p0 = self.p_offset();
        for (o, m) in out[p0..p0 + self.nx].iter_mut().zip(forcing) {
            *o += self.forcing_gain * m;
        }
    }

    fn rk4(&self, y: &mut [f64], forcing: &[f64], s: &mut Scratch) {
        let h = self.cfg.dt_sim();
        self.rhs(y, forcing, &mut s.k1);
        for ((t, a), k) in s.tmp.iter_mut().zip(y.iter()).zip(&s.k1) {
            *t = a + 0.5 * h * k;
        }
        self.rhs(&s.tmp, forcing, &mut s.k2);
        for ((t, a), k) in s.tmp.iter_mut().zip(y.iter()).zip(&s.k2) {
            *t = a + 0.5 * h * k;
        }
        self.rhs(&s.tmp, forcing, &mut s.k3);
        for ((t, a), k) in s.tmp.iter_mut().zip(y.iter()).zip(&s.k3) {
            *t = a + h * k;
        }
        self.rhs(&s.tmp, forcing, &mut s.k4);
        let c = h / 6.0;
        for i in 0..y.len() {
            y[i] += c * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
        }
    }

    /// Transpose of one [`WaveSolver::rk4`] step: maps the adjoint of the
    /// output state to the adjoint of the input state in place, and adds
    /// the adjoint of the (constant) forcing to `forcing_adj`.
    fn rk4_adjoint(&self, lam: &mut [f64], forcing_adj: &mut [f64], s: &mut Scratch) {
        let h = self.cfg.dt_sim();
        let (kb1, kb2, kb3, kb4) = (&mut s.k1, &mut s.k2, &mut s.k3, &mut s.k4);
        for i in 0..lam.len() {
            kb1[i] = h / 6.0 * lam[i];
            kb2[i] = h / 3.0 * lam[i];
            kb3[i] = h / 3.0 * lam[i];
            kb4[i] = h / 6.0 * lam[i];
        }
        let tmp = &mut s.tmp;
        // Stage 4: k4 = A (y + h k3) + f.
        spmv(&self.op_t, kb4, tmp);
        for i in 0..lam.len() {
            lam[i] += tmp[i];
            kb3[i] += h * tmp[i];
        }
        // Stage 3: k3 = A (y + h/2 k2) + f.
        spmv(&self.op_t, kb3, tmp);
        for i in 0..lam.len() {
            lam[i] += tmp[i];
            kb2[i] += 0.5 * h * tmp[i];
        }
        // Stage 2: k2 = A (y + h/2 k1) + f.
        spmv(&self.op_t, kb2, tmp);
        for i in 0..lam.len() {
            lam[i] += tmp[i];
            kb1[i] += 0.5 * h * tmp[i];
        }
        // Stage 1: k1 = A y + f.
        spmv(&self.op_t, kb1, tmp);
        for i in 0..lam.len() {
            lam[i] += tmp[i];
        }
        let p0 = self.p_offset();
        for (x, fa) in forcing_adj.iter_mut().enumerate() {
            let i = p0 + x;
            *fa += self.forcing_gain * (kb1[i] + kb2[i] + kb3[i] + kb4[i]);
        }
    }

    fn check_state(&self, y: &[f64], substep: usize) -> Result<()> {
        if y.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Instability {
                substep,
                dt_sim: self.cfg.dt_sim(),
                limit: self.cfg.dt_limit(),
            })
        }
    }

    /// Advances `state` by one `dt_sim` with bottom velocity
    /// `forcing_bottom` (one value per bottom node) held constant.
    pub fn step(&self, state: &WaveState, forcing_bottom: &[f64]) -> Result<WaveState> {
        count_call();
        self.check_shapes(state, forcing_bottom)?;
        let mut next = state.clone();
        let mut s = Scratch::new(self.n_state());
        self.rk4(&mut next.values, forcing_bottom, &mut s);
        self.check_state(&next.values, 1)?;
        Ok(next)
    }

    /// Transpose of [`WaveSolver::step`]: returns the adjoint state and the
    /// adjoint of the bottom forcing.
    pub fn adjoint_step(&self, adj: &WaveState) -> Result<(WaveState, Vec<f64>)> {
        count_call();
        self.check_shapes(adj, &vec![0.0; self.nx])?;
        let mut prev = adj.clone();
        let mut forcing_adj = vec![0.0; self.nx];
        let mut s = Scratch::new(self.n_state());
        self.rk4_adjoint(&mut prev.values, &mut forcing_adj, &mut s);
        Ok((prev, forcing_adj))
    }

    fn check_shapes(&self, state: &WaveState, forcing: &[f64]) -> Result<()> {
        if state.nx != self.nx || state.nz != self.nz {
            return Err(Error::Dimension(format!(
                "state grid {}x{} does not match solver grid {}x{}",
                state.nx, state.nz, self.nx, self.nz
            )));
        }
        if forcing.len() != self.nx {
            return Err(Error::Dimension(format!(
                "bottom forcing has {} values, grid has {} bottom nodes",
                forcing.len(),
                self.nx
            )));
        }
        Ok(())
    }

    pub fn zero_state(&self) -> WaveState {
        WaveState::zeros(self.nx, self.nz)
    }

    /// Runs the forward model from rest. `m` holds one bottom velocity per
    /// node and observation interval, held over the `substeps` simulation
    /// steps of that interval. Pressures at the sensors and surface heights
    /// at the forecast points are sampled at the end of every interval.
    pub fn simulate_forward(&self, m: &SpaceTimeField) -> Result<(ObsSeries, QoISeries)> {
        count_call();
        if m.rows() != self.nx {
            return Err(Error::Dimension(format!(
                "parameter field has {} spatial rows, grid has {} bottom nodes",
                m.rows(),
                self.nx
            )));
        }
        let nt = m.n_time();
        let mut d = ObsSeries::zeros(self.sensors.len(), nt, Layout::SpaceMajorRows);
        let mut q = QoISeries::zeros(self.qoi.len(), nt, Layout::SpaceMajorRows);
        let mut y = vec![0.0; self.n_state()];
        let mut s = Scratch::new(self.n_state());
        let mut forcing = vec![0.0; self.nx];
        let (p0, e0) = (self.p_offset(), self.eta_offset());
        for t in 0..nt {
            for (x, f) in forcing.iter_mut().enumerate() {
                *f = m.get(x, t);
            }
            for _ in 0..self.cfg.substeps {
                self.rk4(&mut y, &forcing, &mut s);
            }
            self.check_state(&y, (t + 1) * self.cfg.substeps)?;
            for (k, &i) in self.sensors.iter().enumerate() {
                d.values_mut()[k * nt + t] = y[p0 + i];
            }
            for (k, &i) in self.qoi.iter().enumerate() {
                q.values_mut()[k * nt + t] = y[e0 + i];
            }
        }
        Ok((d, q))
    }

    /// `F^T w_d + F_q^T w_q` by one reverse-time sweep of the discrete
    /// adjoint.
    pub fn simulate_adjoint(&self, w_d: &ObsSeries, w_q: &QoISeries) -> Result<SpaceTimeField> {
        count_call();
        let nt = w_d.n_time();
        w_d.check_shape(self.sensors.len(), nt)?;
        w_q.check_shape(self.qoi.len(), nt)?;
        let mut out = SpaceTimeField::zeros(self.nx, nt, Layout::SpaceMajorRows);
        let mut lam = vec![0.0; self.n_state()];
        let mut s = Scratch::new(self.n_state());
        let mut forcing_adj = vec![0.0; self.nx];
        let (p0, e0) = (self.p_offset(), self.eta_offset());
        for t in (0..nt).rev() {
            for (k, &i) in self.sensors.iter().enumerate() {
                lam[p0 + i] += w_d.get(k, t);
            }
            for (k, &i) in self.qoi.iter().enumerate() {
                lam[e0 + i] += w_q.get(k, t);
            }
            forcing_adj.fill(0.0);
            for _ in 0..self.cfg.substeps {
                self.rk4_adjoint(&mut lam, &mut forcing_adj, &mut s);
            }
            self.check_state(&lam, (nt - t) * self.cfg.substeps)?;
            for (x, v) in forcing_adj.iter().enumerate() {
                out.values_mut()[x * nt + t] = *v;
            }
        }
        Ok(out)
    }

    /// Lag series `[x][k]` of one output functional, seeded at state
    /// index `seed` and swept backwards through `n_time` intervals.
    fn adjoint_kernel_slice(&self, seed: usize, n_time: usize) -> Result<Vec<f64>> {
        count_call();
        let mut lam = vec![0.0; self.n_state()];
        lam[seed] = 1.0;
        let mut s = Scratch::new(self.n_state());
        let mut forcing_adj = vec![0.0; self.nx];
        let mut slice = vec![0.0; self.nx * n_time];
        for k in 0..n_time {
            forcing_adj.fill(0.0);
            for _ in 0..self.cfg.substeps {
                self.rk4_adjoint(&mut lam, &mut forcing_adj, &mut s);
            }
            self.check_state(&lam, (k + 1) * self.cfg.substeps)?;
            for (x, v) in forcing_adj.iter().enumerate() {
                slice[x * n_time + k] = *v;
            }
        }
        Ok(slice)
    }

    /// Row of the p2o kernel for sensor `j`: entry `[x][k]` is the pressure
    /// response at sensor `j`, `k` intervals after a unit bottom velocity
    /// at node `x` during the first interval. Costs one adjoint solve.
    pub fn adjoint_kernel_for_sensor(&self, j: usize, n_time: usize) -> Result<Vec<f64>> {
        let &node = self
            .sensors
            .get(j)
            .ok_or_else(|| Error::Index(format!("sensor {j} of {}", self.sensors.len())))?;
        self.adjoint_kernel_slice(self.p_offset() + node, n_time)
    }

    /// Row of the p2q kernel for forecast point `j`, sampling `η`.
    pub fn adjoint_kernel_for_qoi(&self, j: usize, n_time: usize) -> Result<Vec<f64>> {
        let &node = self
            .qoi
            .get(j)
            .ok_or_else(|| Error::Index(format!("QoI point {j} of {}", self.qoi.len())))?;
        self.adjoint_kernel_slice(self.eta_offset() + node, n_time)
    }

    fn assemble(
        &self,
        rows: usize,
        n_time: usize,
        provenance: Provenance,
        slice: impl Fn(usize) -> Result<Vec<f64>> + Sync + Send,
    ) -> Result<BlockToeplitzKernel> {
        let slices: Vec<Vec<f64>> = (0..rows).into_par_iter().map(slice).collect::<Result<_>>()?;
        BlockToeplitzKernel::new(rows, self.nx, n_time, provenance, slices.concat())
    }

    /// Full p2o kernel from `N_d` adjoint solves (run in parallel).
    pub fn p2o_kernel(&self, n_time: usize) -> Result<BlockToeplitzKernel> {
        self.assemble(self.n_sensors(), n_time, Provenance::F, |j| {
            self.adjoint_kernel_for_sensor(j, n_time)
        })
    }

    /// Full p2q kernel from `N_q` adjoint solves.
    pub fn p2q_kernel(&self, n_time: usize) -> Result<BlockToeplitzKernel> {
        self.assemble(self.n_qoi(), n_time, Provenance::Fq, |j| {
            self.adjoint_kernel_for_qoi(j, n_time)
        })
    }

    /// Discrete energy per unit strike length (J/m).
    pub fn energy(&self, state: &WaveState) -> f64 {
        let cfg = &self.cfg;
        let (nx, nz) = (self.nx, self.nz);
        let weight = |k: usize, len: usize, h: f64| if k == 0 || k == len - 1 { h / 2.0 } else { h };
        let bulk = cfg.bulk();
        let mut e = 0.0;
        for j in 0..nz {
            let wz = weight(j, nz, cfg.hz);
            for i in 0..nx {
                let n = j * nx + i;
                let w = wz * weight(i, nx, cfg.hx);
                let (ux, uz, p) = (state.ux()[n], state.uz()[n], state.p()[n]);
                e += w * (cfg.density * (ux * ux + uz * uz) + p * p / bulk);
            }
        }
        for (i, eta) in state.eta().iter().enumerate() {
            e += weight(i, nx, cfg.hx) * cfg.density * cfg.gravity * eta * eta;
        }
        0.5 * e
    }
}
