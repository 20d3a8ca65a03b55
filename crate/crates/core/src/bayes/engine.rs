//! Offline artifacts and online queries of the data-space posterior.
//!
//! With `G = F Γ_prior` the posterior mean and covariance are
//!
//! ```text
//! m_map  = G* K^{-1} d_obs,          K = σ² I + F G*
//! Γ_post = Γ_prior - G* K^{-1} G
//! ```
//!
//! so online work is a pair of triangular solves in data space and
//! Toeplitz matvecs, never a PDE solve.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::gram::gram_columns;
use super::hessian::{form_k, form_k_fused, symmetrize, Assembly, DataSpaceHessian};
use crate::error::{Error, Result};
use crate::kernel::{BlockToeplitzKernel, Provenance};
use crate::layout::{norm, Dims, Layout, ObsSeries, QoISeries, SpaceTimeField};
use crate::matvec::MatvecPlan;
use crate::prior::PriorOp;

/// Data-to-QoI map and QoI posterior covariance.
#[derive(Debug, Clone)]
pub struct QoIMaps {
    /// `(N_q N_t) x (N_d N_t)`.
    pub q: DMatrix<f64>,
    /// `(N_q N_t) x (N_q N_t)`, symmetric.
    pub gamma_post_q: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct MapEstimate {
    pub m_map: SpaceTimeField,
    /// Relative residual of the normal equations
    /// `(F^T F / σ² + Γ_prior^{-1}) m = F^T d / σ²` at `m_map`.
    pub smw_residual: f64,
}

#[derive(Debug, Clone)]
pub struct QoIForecast {
    pub q_map: QoISeries,
    pub ci_lower: QoISeries,
    pub ci_upper: QoISeries,
    pub level: f64,
}

/// Hutchinson estimate of the diagonal of `D Γ_post D^T`.
#[derive(Debug, Clone)]
pub struct ParamStd {
    pub diag: Vec<f64>,
    /// Standard error of each diagonal estimate.
    pub stderr: Vec<f64>,
    /// `sqrt(max(diag, 0))`.
    pub std: Vec<f64>,
    pub n_probes: usize,
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub m_map: SpaceTimeField,
    pub displacement: Vec<f64>,
    pub pointwise_std: Option<Vec<f64>>,
    pub forecast: QoIForecast,
    pub smw_residual: f64,
}

/// Left-endpoint time integral `Σ_t m(x, t) dt_obs` per spatial point.
pub fn integrate_displacement(m: &SpaceTimeField, dt_obs: f64) -> Vec<f64> {
    (0..m.rows())
        .map(|x| (0..m.n_time()).map(|t| m.get(x, t)).sum::<f64>() * dt_obs)
        .collect()
}

/// Two-sided normal multiplier for a credible level in `(0, 1)`; exactly
/// 1.96 at 0.95.
pub fn credible_multiplier(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("credible level must lie in (0, 1), got {level}")));
    }
    if level == 0.95 {
        return Ok(1.96);
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

#[derive(Debug, Clone)]
pub struct Engine {
    dims: Dims,
    sigma2: f64,
    prior: PriorOp,
    kernel_f: BlockToeplitzKernel,
    kernel_g: BlockToeplitzKernel,
    kernel_fq: BlockToeplitzKernel,
    kernel_gq: BlockToeplitzKernel,
    plan_f: MatvecPlan,
    plan_g: MatvecPlan,
    plan_fq: MatvecPlan,
    plan_gq: MatvecPlan,
    hessian: Option<DataSpaceHessian>,
    qoi: Option<QoIMaps>,
}

impl Engine {
    /// Phase 2a: premultiplies `F` and `F_q` by the prior.
    pub fn new(
        kernel_f: BlockToeplitzKernel,
        kernel_fq: BlockToeplitzKernel,
        prior: PriorOp,
        sigma2: f64,
        dt_obs: f64,
    ) -> Result<Self> {
        let kernel_g = prior.premultiply_kernel(&kernel_f)?;
        let kernel_gq = prior.premultiply_kernel(&kernel_fq)?;
        Self::from_kernels(kernel_f, kernel_fq, kernel_g, kernel_gq, prior, sigma2, dt_obs)
    }

    /// Assembles an engine from stored kernels.
    pub fn from_kernels(
        kernel_f: BlockToeplitzKernel,
        kernel_fq: BlockToeplitzKernel,
        kernel_g: BlockToeplitzKernel,
        kernel_gq: BlockToeplitzKernel,
        prior: PriorOp,
        sigma2: f64,
        dt_obs: f64,
    ) -> Result<Self> {
        let expect = [
            (&kernel_f, Provenance::F),
            (&kernel_fq, Provenance::Fq),
            (&kernel_g, Provenance::Gstar),
            (&kernel_gq, Provenance::Gqstar),
        ];
        for (k, p) in expect {
            if k.provenance() != p {
                return Err(Error::Dimension(format!(
                    "expected a {} kernel, got {}",
                    p.name(),
                    k.provenance().name()
                )));
            }
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("noise variance must be positive, got {sigma2}")));
        }
        let dims = Dims::new(
            kernel_f.n_cols(),
            kernel_f.rows_out(),
            kernel_fq.rows_out(),
            kernel_f.n_time(),
            dt_obs,
        )?;
        let consistent = kernel_g.rows_out() == dims.n_sensors
            && kernel_gq.rows_out() == dims.n_qoi
            && [&kernel_fq, &kernel_g, &kernel_gq]
                .iter()
                .all(|k| k.n_cols() == dims.n_space && k.n_time() == dims.n_time)
            && prior.n_space() == dims.n_space;
        if !consistent {
            return Err(Error::Dimension("kernels and prior disagree on N_m, N_d, N_q or N_t".into()));
        }
        Ok(Self {
            dims,
            sigma2,
            plan_f: MatvecPlan::new(&kernel_f),
            plan_g: MatvecPlan::new(&kernel_g),
            plan_fq: MatvecPlan::new(&kernel_fq),
            plan_gq: MatvecPlan::new(&kernel_gq),
            prior,
            kernel_f,
            kernel_g,
            kernel_fq,
            kernel_gq,
            hessian: None,
            qoi: None,
        })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn prior(&self) -> &PriorOp {
        &self.prior
    }

    pub fn kernel_f(&self) -> &BlockToeplitzKernel {
        &self.kernel_f
    }

    pub fn kernel_fq(&self) -> &BlockToeplitzKernel {
        &self.kernel_fq
    }

    pub fn kernel_g(&self) -> &BlockToeplitzKernel {
        &self.kernel_g
    }

    pub fn kernel_gq(&self) -> &BlockToeplitzKernel {
        &self.kernel_gq
    }

    pub fn plan_f(&self) -> &MatvecPlan {
        &self.plan_f
    }

    pub fn plan_fq(&self) -> &MatvecPlan {
        &self.plan_fq
    }

    pub fn plan_g(&self) -> &MatvecPlan {
        &self.plan_g
    }

    pub fn plan_gq(&self) -> &MatvecPlan {
        &self.plan_gq
    }

    pub fn hessian(&self) -> Result<&DataSpaceHessian> {
        self.hessian.as_ref().ok_or(Error::State("data-space Hessian K has not been formed"))
    }

    pub fn qoi_maps(&self) -> Result<&QoIMaps> {
        self.qoi.as_ref().ok_or(Error::State("QoI maps Q and Γ_post(q) have not been formed"))
    }

    /// Phase 2b: forms and factorizes `K`.
    pub fn form_k(&mut self, assembly: Assembly) -> Result<&DataSpaceHessian> {
        let h = match assembly {
            Assembly::Columns => form_k(&self.plan_f, &self.plan_g, self.sigma2)?,
            Assembly::Fused => form_k_fused(&self.kernel_f, &self.kernel_g, self.sigma2)?,
        };
        self.hessian = Some(h);
        self.hessian()
    }

    pub fn set_hessian(&mut self, h: DataSpaceHessian) -> Result<()> {
        if h.dim() != self.dims.data_len() {
            return Err(Error::Dimension(format!(
                "K has dimension {}, data space has {}",
                h.dim(),
                self.dims.data_len()
            )));
        }
        self.hessian = Some(h);
        Ok(())
    }

    /// Phase 3: `Q = (K^{-1} F G_q*)^T` and
    /// `Γ_post(q) = F_q G_q* - (F G_q*)^T K^{-1} (F G_q*)`.
    pub fn form_qoi_maps(&mut self) -> Result<&QoIMaps> {
        let h = self.hessian()?;
        let w = gram_columns(&self.plan_f, &self.plan_gq)?;
        let y = h.half_solve(&w);
        let mut kinv_w = y.clone();
        h.chol().tr_solve_lower_triangular_mut(&mut kinv_w);
        let mut cov = self.prior_qoi_cov()?;
        cov -= y.transpose() * &y;
        symmetrize(&mut cov);
        check_diagonal(&cov)?;
        self.qoi = Some(QoIMaps { q: kinv_w.transpose(), gamma_post_q: cov });
        self.qoi_maps()
    }

    pub fn set_qoi_maps(&mut self, maps: QoIMaps) -> Result<()> {
        let (nq, nd) = (self.dims.qoi_len(), self.dims.data_len());
        if maps.q.shape() != (nq, nd) || maps.gamma_post_q.shape() != (nq, nq) {
            return Err(Error::Dimension(format!(
                "Q is {:?} and Γ_post(q) is {:?}, expected ({nq}, {nd}) and ({nq}, {nq})",
                maps.q.shape(),
                maps.gamma_post_q.shape()
            )));
        }
        self.qoi = Some(maps);
        Ok(())
    }

    /// Prior QoI covariance `F_q Γ_prior F_q* = F_q G_q*`.
    pub fn prior_qoi_cov(&self) -> Result<DMatrix<f64>> {
        let mut p = gram_columns(&self.plan_fq, &self.plan_gq)?;
        symmetrize(&mut p);
        Ok(p)
    }

    fn data_vector(&self, d_obs: &ObsSeries) -> Result<ObsSeries> {
        d_obs.check_shape(self.dims.n_sensors, self.dims.n_time)?;
        Ok(d_obs.reindex(Layout::SpaceMajorRows))
    }

    /// Phase 4: `m_map = G* K^{-1} d_obs`, with the normal-equation
    /// residual evaluated by kernel matvecs and prior precision applies.
    pub fn infer_map(&self, d_obs: &ObsSeries) -> Result<MapEstimate> {
        let h = self.hessian()?;
        let d = self.data_vector(d_obs)?;
        let c = ObsSeries::new(h.solve(d.values())?, d.rows(), d.n_time(), Layout::SpaceMajorRows)?;
        let m_map: SpaceTimeField = self.plan_g.apply_adjoint(&c)?;
        let smw_residual = self.normal_equation_residual(&m_map, &d)?;
        Ok(MapEstimate { m_map, smw_residual })
    }

    /// `‖(F^T F / σ² + Γ^{-1}) m - F^T d / σ²‖ / ‖F^T d / σ²‖`.
    pub fn normal_equation_residual(&self, m: &SpaceTimeField, d_obs: &ObsSeries) -> Result<f64> {
        let m = m.reindex(Layout::SpaceMajorRows);
        let d = self.data_vector(d_obs)?;
        let fm: ObsSeries = self.plan_f.apply(&m)?;
        let misfit = fm.axpy(-1.0, &d)?;
        let mut r: SpaceTimeField = self.plan_f.apply_adjoint(&misfit)?;
        r = r.scaled(1.0 / self.sigma2);
        r = r.axpy(1.0, &self.prior.apply_precision(&m)?)?;
        let rhs: SpaceTimeField = self.plan_f.apply_adjoint(&d)?;
        let scale = rhs.norm() / self.sigma2;
        Ok(if scale > 0.0 { r.norm() / scale } else { r.norm() })
    }

    /// `F_q m` by FFT matvec.
    pub fn apply_fq(&self, m: &SpaceTimeField) -> Result<QoISeries> {
        self.plan_fq.apply(&m.reindex(Layout::SpaceMajorRows))
    }

    /// `Q d_obs`.
    pub fn apply_q(&self, d_obs: &ObsSeries) -> Result<QoISeries> {
        let maps = self.qoi_maps()?;
        let d = self.data_vector(d_obs)?;
        let q = &maps.q * DVector::from_column_slice(d.values());
        QoISeries::new(q.as_slice().to_vec(), self.dims.n_qoi, self.dims.n_time, Layout::SpaceMajorRows)
    }

    /// Phase 4: `q_map = Q d_obs` with two-sided normal credible intervals
    /// at `level` from the diagonal of `Γ_post(q)`.
    pub fn predict_qoi(&self, d_obs: &ObsSeries, level: f64) -> Result<QoIForecast> {
        let z = credible_multiplier(level)?;
        let maps = self.qoi_maps()?;
        let q_map = self.apply_q(d_obs)?;
        let half: Vec<f64> = maps.gamma_post_q.diagonal().iter().map(|v| z * v.max(0.0).sqrt()).collect();
        let lower: Vec<f64> = q_map.values().iter().zip(&half).map(|(q, h)| q - h).collect();
        let upper: Vec<f64> = q_map.values().iter().zip(&half).map(|(q, h)| q + h).collect();
        let (nq, nt) = (self.dims.n_qoi, self.dims.n_time);
        Ok(QoIForecast {
            ci_lower: QoISeries::new(lower, nq, nt, Layout::SpaceMajorRows)?,
            ci_upper: QoISeries::new(upper, nq, nt, Layout::SpaceMajorRows)?,
            q_map,
            level,
        })
    }

    /// `D Γ_post D^T z` for a spatial probe `z`, where `D` integrates over
    /// time with `dt_obs` weights: one K solve and two kernel matvecs.
    pub fn apply_displacement_cov(&self, z: &[f64]) -> Result<Vec<f64>> {
        let h = self.hessian()?;
        let (nm, nt, dt) = (self.dims.n_space, self.dims.n_time, self.dims.dt_obs);
        if z.len() != nm {
            return Err(Error::Dimension(format!("probe has {} entries, N_m = {nm}", z.len())));
        }
        let v = SpaceTimeField::from_fn(nm, nt, Layout::SpaceMajorRows, |x, _| z[x] * dt);
        let mut prior_part = v.clone();
        self.prior.apply_cov_block(prior_part.values_mut(), nt);
        let gv: ObsSeries = self.plan_g.apply(&v)?;
        let c = ObsSeries::new(h.solve(gv.values())?, gv.rows(), nt, Layout::SpaceMajorRows)?;
        let data_part: SpaceTimeField = self.plan_g.apply_adjoint(&c)?;
        let diff = prior_part.axpy(-1.0, &data_part)?;
        Ok(integrate_displacement(&diff, dt))
    }

    /// Hutchinson estimate of the pointwise posterior variance of the
    /// displacement `∫ m dt`, with Rademacher probes. Probe `i` is drawn
    /// from a generator seeded with `seed + i`, so the result does not
    /// depend on the thread count.
    pub fn pointwise_param_std(&self, n_probes: usize, seed: u64) -> Result<ParamStd> {
        if n_probes < 1 {
            return Err(Error::Config("at least one probe is required".into()));
        }
        let nm = self.dims.n_space;
        let samples: Vec<Vec<f64>> = (0..n_probes)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let z: Vec<f64> = (0..nm).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
                let az = self.apply_displacement_cov(&z)?;
                Ok(z.iter().zip(&az).map(|(a, b)| a * b).collect())
            })
            .collect::<Result<_>>()?;
        let n = n_probes as f64;
        let mut diag = vec![0.0; nm];
        for s in &samples {
            for (d, v) in diag.iter_mut().zip(s) {
                *d += v;
            }
        }
        diag.iter_mut().for_each(|d| *d /= n);
        let stderr = (0..nm)
            .map(|x| {
                if n_probes < 2 {
                    return f64::NAN;
                }
                let var = samples.iter().map(|s| (s[x] - diag[x]).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            })
            .collect();
        let std = diag.iter().map(|d| d.max(0.0).sqrt()).collect();
        Ok(ParamStd { diag, stderr, std, n_probes })
    }

    /// MAP, displacement, forecast and (with `probes = Some((n, seed))`)
    /// pointwise displacement standard deviations.
    pub fn summarize(&self, d_obs: &ObsSeries, level: f64, probes: Option<(usize, u64)>) -> Result<PosteriorSummary> {
        let map = self.infer_map(d_obs)?;
        let forecast = self.predict_qoi(d_obs, level)?;
        let pointwise_std = match probes {
            Some((n, seed)) => Some(self.pointwise_param_std(n, seed)?.std),
            None => None,
        };
        Ok(PosteriorSummary {
            displacement: integrate_displacement(&map.m_map, self.dims.dt_obs),
            m_map: map.m_map,
            pointwise_std,
            forecast,
            smw_residual: map.smw_residual,
        })
    }
}

fn check_diagonal(cov: &DMatrix<f64>) -> Result<()> {
    let tol = 1e-10 * cov.norm();
    if let Some((i, v)) = cov.diagonal().iter().enumerate().find(|(_, v)| **v < -tol) {
        return Err(Error::Numerical(format!(
            "Γ_post(q) has diagonal entry {v:e} at index {i}, below -{tol:e}"
        )));
    }
    Ok(())
}

/// Relative error `‖a - b‖ / ‖b‖` between two slices (absolute when `b`
/// is zero).
pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nb = norm(b);
    if nb > 0.0 {
        norm(&diff) / nb
    } else {
        norm(&diff)
    }
}
