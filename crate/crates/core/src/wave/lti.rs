//! Dense discrete-time LTI systems `x_k = A x_{k-1} + B m_k`,
//! `d_k = C x_k`, `q_k = C_q x_k`, `x_0 = 0`.

use nalgebra::{DMatrix, DVector};

use super::solver::{WaveSolver, WaveState};
use crate::error::{Error, Result};
use crate::kernel::{BlockToeplitzKernel, Provenance};
use crate::layout::{Layout, ObsSeries, QoISeries, SpaceTimeField};

#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_q: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, c_q: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || c_q.ncols() != n {
            return Err(Error::Dimension(format!(
                "inconsistent state dimensions: A {}x{}, B {}x{}, C {}x{}, C_q {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                c_q.nrows(),
                c_q.ncols()
            )));
        }
        Ok(Self { a, b, c, c_q })
    }

    pub fn n_state(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Materializes the per-observation-interval map of a wave solver:
    /// `A = Φ^r`, `B` the response to a unit bottom velocity held over one
    /// interval, `C` and `C_q` the sensor and surface samplers. Costs one
    /// interval propagation per state and input; tiny grids only.
    pub fn from_wave(solver: &WaveSolver) -> Result<Self> {
        let (nx, nz) = (solver.nx(), solver.nz());
        let n = solver.n_state();
        let r = solver.config().substeps;
        let propagate = |y: WaveState, f: &[f64]| -> Result<WaveState> {
            let mut y = y;
            for _ in 0..r {
                y = solver.step(&y, f)?;
            }
            Ok(y)
        };
        let zero_f = vec![0.0; nx];
        let mut a = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let y = propagate(WaveState::from_values(nx, nz, e)?, &zero_f)?;
            a.column_mut(col).copy_from_slice(y.as_slice());
        }
        let mut b = DMatrix::zeros(n, nx);
        for x in 0..nx {
            let mut f = vec![0.0; nx];
            f[x] = 1.0;
            let y = propagate(solver.zero_state(), &f)?;
            b.column_mut(x).copy_from_slice(y.as_slice());
        }
        let p0 = 2 * nx * nz;
        let e0 = 3 * nx * nz;
        let mut c = DMatrix::zeros(solver.n_sensors(), n);
        for (k, &i) in solver.sensor_nodes().iter().enumerate() {
            c[(k, p0 + i)] = 1.0;
        }
        let mut c_q = DMatrix::zeros(solver.n_qoi(), n);
        for (k, &i) in solver.qoi_nodes().iter().enumerate() {
            c_q[(k, e0 + i)] = 1.0;
        }
        Self::new(a, b, c, c_q)
    }

    /// Step-by-step recursion; returns `(d, q)` in space-major order.
    pub fn simulate(&self, m: &SpaceTimeField) -> Result<(ObsSeries, QoISeries)> {
        if m.rows() != self.n_inputs() {
            return Err(Error::Dimension(format!(
                "input has {} rows, system has {} inputs",
                m.rows(),
                self.n_inputs()
            )));
        }
        let nt = m.n_time();
        let mut d = ObsSeries::zeros(self.c.nrows(), nt, Layout::SpaceMajorRows);
        let mut q = QoISeries::zeros(self.c_q.nrows(), nt, Layout::SpaceMajorRows);
        let mut x = DVector::zeros(self.n_state());
        for t in 0..nt {
            let mt = DVector::from_fn(self.n_inputs(), |i, _| m.get(i, t));
            x = &self.a * x + &self.b * mt;
            let dt = &self.c * &x;
            let qt = &self.c_q * &x;
            for (s, v) in dt.iter().enumerate() {
                d.values_mut()[s * nt + t] = *v;
            }
            for (s, v) in qt.iter().enumerate() {
                q.values_mut()[s * nt + t] = *v;
            }
        }
        Ok((d, q))
    }
}

/// First block columns of the p2o and p2q maps: lag `k` (0-based) holds
/// `C A^k B` and `C_q A^k B`.
pub fn lti_impulse_kernel(
    sys: &LtiSystem,
    n_time: usize,
) -> Result<(BlockToeplitzKernel, BlockToeplitzKernel)> {
    let (nd, nq, nm) = (sys.c.nrows(), sys.c_q.nrows(), sys.n_inputs());
    let mut f = BlockToeplitzKernel::zeros(nd, nm, n_time, Provenance::F);
    let mut fq = BlockToeplitzKernel::zeros(nq, nm, n_time, Provenance::Fq);
    let mut akb = sys.b.clone();
    for k in 0..n_time {
        let blk = &sys.c * &akb;
        let blk_q = &sys.c_q * &akb;
        for s in 0..nd {
            for x in 0..nm {
                f.series_mut(s, x)[k] = blk[(s, x)];
            }
        }
        for s in 0..nq {
            for x in 0..nm {
                fq.series_mut(s, x)[k] = blk_q[(s, x)];
            }
        }
        akb = &sys.a * akb;
    }
    Ok((f, fq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::rel_err;
    use crate::matvec::MatvecPlan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| scale * rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_dynamics_give_block_identity() {
        let i2 = DMatrix::identity(2, 2);
        let sys = LtiSystem::new(DMatrix::zeros(2, 2), i2.clone(), i2.clone(), i2).unwrap();
        let (f, _) = lti_impulse_kernel(&sys, 4).unwrap();
        assert_eq!(f, BlockToeplitzKernel::identity(2, 4, Provenance::F));
    }

    #[test]
    fn scalar_integrator_is_cumulative_sum() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let sys = LtiSystem::new(one.clone(), one.clone(), one.clone(), one).unwrap();
        let (f, _) = lti_impulse_kernel(&sys, 5).unwrap();
        assert!(f.data().iter().all(|&v| v == 1.0));
        let m = SpaceTimeField::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1, 5, Layout::SpaceMajorRows).unwrap();
        let (d, _) = sys.simulate(&m).unwrap();
        assert_eq!(d.values(), &[1.0, 3.0, 6.0, 10.0, 15.0]);
    }

    #[test]
    fn kernel_matches_materialized_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, nm, nd, nt) = (3, 2, 2, 5);
        let sys = LtiSystem::new(
            random_matrix(&mut rng, n, n, 0.5),
            random_matrix(&mut rng, n, nm, 1.0),
            random_matrix(&mut rng, nd, n, 1.0),
            random_matrix(&mut rng, 1, n, 1.0),
        )
        .unwrap();
        let (f, _) = lti_impulse_kernel(&sys, nt).unwrap();
        // Column (x, j) of the big matrix: simulate a unit input at (x, j).
        for x in 0..nm {
            for j in 0..nt {
                let m = SpaceTimeField::from_fn(nm, nt, Layout::SpaceMajorRows, |r, t| {
                    ((r, t) == (x, j)) as u8 as f64
                });
                let (d, _) = sys.simulate(&m).unwrap();
                for s in 0..nd {
                    for i in 0..nt {
                        let want = d.get(s, i);
                        let block = f.toeplitz_block(i + 1, j + 1).unwrap();
                        assert!((block[s * nm + x] - want).abs() <= 1e-14 * want.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_matvec_agrees_with_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (n, nm, nd, nq, nt) = (6, 3, 2, 2, 40);
        let sys = LtiSystem::new(
            random_matrix(&mut rng, n, n, 0.3),
            random_matrix(&mut rng, n, nm, 1.0),
            random_matrix(&mut rng, nd, n, 1.0),
            random_matrix(&mut rng, nq, n, 1.0),
        )
        .unwrap();
        let (f, fq) = lti_impulse_kernel(&sys, nt).unwrap();
        let m = SpaceTimeField::from_fn(nm, nt, Layout::SpaceMajorRows, |_, _| rng.gen_range(-1.0..1.0));
        let (d, q) = sys.simulate(&m).unwrap();
        let d_fft: ObsSeries = MatvecPlan::new(&f).apply(&m).unwrap();
        let q_fft: QoISeries = MatvecPlan::new(&fq).apply(&m).unwrap();
        assert!(rel_err(d_fft.values(), d.values()) < 1e-13);
        assert!(rel_err(q_fft.values(), q.values()) < 1e-13);
    }

    #[test]
    fn dimension_mismatch() {
        let err = LtiSystem::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 2),
        );
        assert!(matches!(err, Err(Error::Dimension(_))));
    }
}
