use ltibayes_core::bayes::relative_gap;
use ltibayes_core::matvec::{dense_apply, DEFAULT_DENSE_CAP_BYTES};
use ltibayes_core::oracle::DenseProblem;
use ltibayes_core::wave::{WaveConfig, WaveSolver, WaveState};
use ltibayes_core::{BlockToeplitzKernel, Engine, Layout, MatvecPlan, ObsSeries, PriorOp, Provenance, QoISeries, SpaceTimeField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Options;
use crate::error::Result;

/// One invariant with its measured value and the bound it must meet.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, hi: f64) -> Self {
        Self { name, measured, lo: f64::NEG_INFINITY, hi }
    }

    pub fn passed(&self) -> bool {
        self.measured >= self.lo && self.measured <= self.hi
    }

    pub fn line(&self) -> String {
        let bound = if self.lo.is_finite() {
            format!("in [{}, {}]", self.lo, self.hi)
        } else {
            format!("<= {:e}", self.hi)
        };
        format!(
            "{} {:<20} measured {:.3e}  ({bound})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.measured
        )
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

fn tiny_wave() -> WaveConfig {
    WaveConfig::uniform(24, 8, 50.0, 0.1, 8, &[3, 9, 15, 21], &[6, 18])
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_gap(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
}

/// `⟨F m, w⟩` against `⟨m, F^T w⟩` for the wave solver pair.
fn wave_dot_test(solver: &WaveSolver, nt: usize, pairs: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (nm, nd, nq) = (solver.n_space(), solver.n_sensors(), solver.n_qoi());
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let m = SpaceTimeField::new(random_vec(rng, nm * nt), nm, nt, Layout::SpaceMajorRows)?;
        let wd = ObsSeries::new(random_vec(rng, nd * nt), nd, nt, Layout::SpaceMajorRows)?;
        let wq = QoISeries::new(random_vec(rng, nq * nt), nq, nt, Layout::SpaceMajorRows)?;
        let (d, q) = solver.simulate_forward(&m)?;
        let adj = solver.simulate_adjoint(&wd, &wq)?;
        let lhs = dot(d.values(), wd.values()) + dot(q.values(), wq.values());
        worst = worst.max(dot_gap(lhs, dot(m.values(), adj.values())));
    }
    Ok(worst)
}

/// The same test on a kernel. With `fake_adjoint` the adjoint side applies
/// the block-transposed kernel as a forward map, which is not the adjoint.
fn kernel_dot_test(k: &BlockToeplitzKernel, pairs: usize, fake_adjoint: bool, rng: &mut ChaCha8Rng) -> f64 {
    let plan = MatvecPlan::new(k);
    let fake = MatvecPlan::new(&k.transpose_blocks());
    let (nr, nc, nt) = (k.rows_out(), k.n_cols(), k.n_time());
    let mut scratch = plan.make_scratch();
    let mut fake_scratch = fake.make_scratch();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let m = random_vec(rng, nc * nt);
        let w = random_vec(rng, nr * nt);
        let mut fm = vec![0.0; nr * nt];
        let mut ftw = vec![0.0; nc * nt];
        plan.apply_into(&m, &mut fm, &mut scratch);
        if fake_adjoint {
            fake.apply_into(&w, &mut ftw, &mut fake_scratch);
        } else {
            plan.apply_adjoint_into(&w, &mut ftw, &mut scratch);
        }
        worst = worst.max(dot_gap(dot(&fm, &w), dot(&m, &ftw)));
    }
    worst
}

fn fft_vs_dense(instances: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (nr, nc, nt) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=64));
        let k = BlockToeplitzKernel::from_fn(nr, nc, nt, Provenance::F, |_, _, _| rng.gen_range(-1.0..1.0));
        let plan = MatvecPlan::new(&k);
        let v = random_vec(rng, nc * nt);
        let w = random_vec(rng, nr * nt);
        let mut out = vec![0.0; nr * nt];
        let mut out_t = vec![0.0; nc * nt];
        let mut s = plan.make_scratch();
        plan.apply_into(&v, &mut out, &mut s);
        plan.apply_adjoint_into(&w, &mut out_t, &mut s);
        worst = worst.max(relative_gap(&out, &dense_apply(&k, &v, false, DEFAULT_DENSE_CAP_BYTES)?));
        worst = worst.max(relative_gap(&out_t, &dense_apply(&k, &w, true, DEFAULT_DENSE_CAP_BYTES)?));
    }
    Ok(worst)
}

/// Relative energy change after `n_steps` unforced steps of a closed box
/// (rigid lateral walls) started from a smooth pressure pulse.
pub fn energy_drift(cfg: &WaveConfig, n_steps: usize) -> Result<f64> {
    let solver = WaveSolver::new(cfg)?;
    let (nx, nz) = (solver.nx(), solver.nz());
    let mut state = WaveState::zeros(nx, nz);
    let (xc, zc, s) = (0.5 * (nx - 1) as f64, 0.5 * (nz - 1) as f64, 0.15 * (nz - 1) as f64);
    for j in 0..nz {
        for i in 0..nx {
            let r2 = ((i as f64 - xc).powi(2) + (j as f64 - zc).powi(2)) / (s * s);
            let n = state.node(i, j);
            state.p_mut()[n] = 1e3 * (-0.5 * r2).exp();
        }
    }
    let zeros = vec![0.0; nx];
    let e0 = solver.energy(&state);
    for _ in 0..n_steps {
        state = solver.step(&state, &zeros)?;
    }
    Ok((solver.energy(&state) - e0).abs() / e0)
}

/// Drift ratio between runs at `dt` and `dt/2` with the same number of
/// steps on an `nx x nz` closed box. RK4 on a conservative system loses
/// energy as `(ω dt)^6` per step, so the ratio approaches 64.
pub fn energy_drift_ratio(nx: usize, nz: usize, substeps: usize, n_steps: usize) -> Result<f64> {
    let mut cfg = WaveConfig::uniform(nx, nz, 50.0, 0.1, substeps, &[0], &[0]);
    cfg.absorbing = false;
    let coarse = energy_drift(&cfg, n_steps)?;
    cfg.substeps *= 2;
    let fine = energy_drift(&cfg, n_steps)?;
    Ok(coarse / fine)
}

/// Runs the oracle suite on built-in instances. With `--debug-transpose`
/// the kernel dot-product test uses a transposed kernel in place of the
/// adjoint and must fail.
pub fn verify(opts: &Options) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.unwrap_or(2024));
    let cfg = tiny_wave();
    let nt = 12;
    let solver = WaveSolver::new(&cfg)?;
    let kf = solver.p2o_kernel(nt)?;
    let kfq = solver.p2q_kernel(nt)?;
    let mut checks = vec![
        Check::at_most("dot_product_wave", wave_dot_test(&solver, nt, 10, &mut rng)?, 1e-12),
        Check::at_most("dot_product_kernel", kernel_dot_test(&kf, 20, opts.debug_transpose, &mut rng), 1e-12),
        Check::at_most("fft_vs_dense", fft_vs_dense(20, &mut rng)?, 1e-10),
    ];

    let prior = PriorOp::build(cfg.nx(), cfg.hx, (4.0 * cfg.hx).powi(2), 1.0)?;
    let truth = ltibayes_core::wave::synth_truth(
        &cfg,
        nt,
        &ltibayes_core::wave::BumpParams { center: 600.0, width: 150.0, rise_time: 0.8, amplitude: 1.0 },
    )?;
    let (d, _) = solver.simulate_forward(&truth)?;
    let (d_obs, sigma) = ltibayes_core::wave::add_noise(&d, 0.01, 7)?;
    let dense = DenseProblem::new(&kf, &kfq, &prior, sigma * sigma, cfg.dt_obs, DEFAULT_DENSE_CAP_BYTES)?;
    let mut engine = Engine::new(kf, kfq, prior, sigma * sigma, cfg.dt_obs)?;
    engine.form_k(Default::default())?;
    let map = engine.infer_map(&d_obs)?;
    checks.push(Check::at_most(
        "map_vs_normal_eq",
        relative_gap(map.m_map.values(), &dense.map(d_obs.values())?),
        1e-8,
    ));
    checks.push(Check::at_most("smw_residual", map.smw_residual, 1e-8));
    checks.push(Check {
        name: "energy_order",
        measured: energy_drift_ratio(48, 16, 16, 600)?,
        lo: 48.0,
        hi: 80.0,
    });

    for c in &checks {
        opts.say(c.line());
    }
    let report = VerifyReport { checks };
    opts.say(if report.all_passed() { "verify: all checks passed" } else { "verify: FAILED" });
    Ok(report)
}
