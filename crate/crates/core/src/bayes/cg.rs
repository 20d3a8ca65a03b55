//! Prior-preconditioned conjugate gradients on the normal equations
//! `(F^T F / σ² + Γ_prior^{-1}) m = F^T d / σ²`, the iterative baseline the
//! direct data-space solve is compared against.

use crate::error::{Error, Result};
use crate::layout::{dot, norm, Layout, ObsSeries, SpaceTimeField};
use crate::matvec::MatvecPlan;
use crate::prior::PriorOp;

#[derive(Debug, Clone)]
pub struct CgResult {
    pub m: SpaceTimeField,
    pub iterations: usize,
    /// Final `‖r‖ / ‖b‖`.
    pub rel_residual: f64,
    pub converged: bool,
}

pub fn cg_map(
    plan_f: &MatvecPlan,
    prior: &PriorOp,
    sigma2: f64,
    d_obs: &ObsSeries,
    tol: f64,
    max_iter: usize,
) -> Result<CgResult> {
    let (nm, nt) = (plan_f.n_cols(), plan_f.n_time());
    if prior.n_space() != nm {
        return Err(Error::Dimension(format!("prior has {} points, F has {nm}", prior.n_space())));
    }
    let d = d_obs.reindex(Layout::SpaceMajorRows);
    d.check_shape(plan_f.rows_out(), nt)?;
    let mut sf = plan_f.make_scratch();
    let mut data_buf = vec![0.0; plan_f.rows_out() * nt];
    let mut hessian = |p: &[f64], out: &mut [f64]| {
        plan_f.apply_into(p, &mut data_buf, &mut sf);
        plan_f.apply_adjoint_into(&data_buf, out, &mut sf);
        let mut reg = p.to_vec();
        prior.apply_precision_block(&mut reg, nt);
        for (o, r) in out.iter_mut().zip(&reg) {
            *o = *o / sigma2 + r;
        }
    };

    let n = nm * nt;
    let mut b = vec![0.0; n];
    plan_f.apply_adjoint_into(d.values(), &mut b, &mut plan_f.make_scratch());
    b.iter_mut().for_each(|v| *v /= sigma2);
    let b_norm = norm(&b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgResult {
            m: SpaceTimeField::new(x, nm, nt, Layout::SpaceMajorRows)?,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        });
    }
    let mut r = b.clone();
    let mut z = r.clone();
    prior.apply_cov_block(&mut z, nt);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut hp = vec![0.0; n];
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < max_iter {
        hessian(&p, &mut hp);
        let alpha = rz / dot(&p, &hp);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        iterations += 1;
        rel = norm(&r) / b_norm;
        if rel <= tol {
            break;
        }
        z.copy_from_slice(&r);
        prior.apply_cov_block(&mut z, nt);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(CgResult {
        m: SpaceTimeField::new(x, nm, nt, Layout::SpaceMajorRows)?,
        iterations,
        rel_residual: rel,
        converged: rel <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{Assembly, Engine};
    use crate::kernel::{BlockToeplitzKernel, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn agrees_with_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let f = BlockToeplitzKernel::from_fn(2, 6, 8, Provenance::F, |_, _, _| rng.gen_range(-1.0..1.0));
        let fq = BlockToeplitzKernel::from_fn(1, 6, 8, Provenance::Fq, |_, _, _| rng.gen_range(-1.0..1.0));
        let prior = PriorOp::build(6, 1.0, 1.0, 1.0).unwrap();
        let mut e = Engine::new(f, fq, prior.clone(), 0.05, 0.1).unwrap();
        e.form_k(Assembly::Columns).unwrap();
        let d = ObsSeries::from_fn(2, 8, Layout::SpaceMajorRows, |_, _| rng.gen_range(-1.0..1.0));
        let direct = e.infer_map(&d).unwrap().m_map;
        let cg = cg_map(e.plan_f(), &prior, 0.05, &d, 1e-12, 500).unwrap();
        assert!(cg.converged);
        assert!(crate::layout::rel_err(cg.m.values(), direct.values()) < 1e-9);
    }
}
