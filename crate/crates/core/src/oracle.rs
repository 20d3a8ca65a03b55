//! Dense reference computations of the posterior, for verification on
//! small instances. Everything here materializes the block operators and
//! works with the parameter-space normal equations directly, independent
//! of the FFT and data-space machinery.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::BlockToeplitzKernel;
use crate::matvec::materialize;
use crate::prior::PriorOp;

/// `Γ_x ⊗ I_{N_t}` in space-major ordering.
fn kron_time(block: &DMatrix<f64>, nt: usize) -> DMatrix<f64> {
    let n = block.nrows();
    let mut out = DMatrix::zeros(n * nt, n * nt);
    for x in 0..n {
        for y in 0..n {
            let v = block[(x, y)];
            if v != 0.0 {
                for t in 0..nt {
                    out[(x * nt + t, y * nt + t)] = v;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct DenseProblem {
    pub f: DMatrix<f64>,
    pub fq: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub sigma2: f64,
    pub n_time: usize,
    pub dt_obs: f64,
}

impl DenseProblem {
    pub fn new(
        kernel_f: &BlockToeplitzKernel,
        kernel_fq: &BlockToeplitzKernel,
        prior: &PriorOp,
        sigma2: f64,
        dt_obs: f64,
        cap_bytes: u64,
    ) -> Result<Self> {
        let nt = kernel_f.n_time();
        let a = prior.dense_operator();
        Ok(Self {
            f: materialize(kernel_f, cap_bytes)?,
            fq: materialize(kernel_fq, cap_bytes)?,
            gamma: kron_time(&prior.dense_cov(), nt),
            precision: kron_time(&(&a * &a), nt),
            sigma2,
            n_time: nt,
            dt_obs,
        })
    }

    /// `σ² I + F Γ F^T`.
    pub fn k(&self) -> DMatrix<f64> {
        let n = self.f.nrows();
        &self.f * &self.gamma * self.f.transpose() + DMatrix::identity(n, n) * self.sigma2
    }

    /// `H = F^T F / σ² + Γ^{-1}`.
    pub fn hessian(&self) -> DMatrix<f64> {
        self.f.transpose() * &self.f / self.sigma2 + &self.precision
    }

    /// `H^{-1}`.
    pub fn posterior_cov(&self) -> Result<DMatrix<f64>> {
        let chol = nalgebra::Cholesky::new(self.hessian())
            .ok_or_else(|| Error::Numerical("dense Hessian is not positive definite".into()))?;
        Ok(chol.inverse())
    }

    /// Solution of the normal equations `H m = F^T d / σ²`.
    pub fn map(&self, d: &[f64]) -> Result<Vec<f64>> {
        let chol = nalgebra::Cholesky::new(self.hessian())
            .ok_or_else(|| Error::Numerical("dense Hessian is not positive definite".into()))?;
        let rhs = self.f.transpose() * DVector::from_column_slice(d) / self.sigma2;
        Ok(chol.solve(&rhs).as_slice().to_vec())
    }

    /// `F_q H^{-1} F_q^T`.
    pub fn qoi_cov(&self) -> Result<DMatrix<f64>> {
        Ok(&self.fq * self.posterior_cov()? * self.fq.transpose())
    }

    /// `F_q Γ F_q^T`.
    pub fn prior_qoi_cov(&self) -> DMatrix<f64> {
        &self.fq * &self.gamma * self.fq.transpose()
    }

    /// `F_q H^{-1} F^T / σ²`.
    pub fn q_matrix(&self) -> Result<DMatrix<f64>> {
        Ok(&self.fq * self.posterior_cov()? * self.f.transpose() / self.sigma2)
    }

    /// Diagonal of `D H^{-1} D^T` with `D` the `dt_obs`-weighted time sum.
    pub fn displacement_var(&self) -> Result<Vec<f64>> {
        let cov = self.posterior_cov()?;
        let nt = self.n_time;
        let nm = cov.nrows() / nt;
        Ok((0..nm)
            .map(|x| {
                let mut s = 0.0;
                for t in 0..nt {
                    for u in 0..nt {
                        s += cov[(x * nt + t, x * nt + u)];
                    }
                }
                s * self.dt_obs * self.dt_obs
            })
            .collect())
    }
}
