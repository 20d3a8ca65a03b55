use ltibayes_core::bayes::{relative_gap, Assembly, Engine};
use ltibayes_core::matvec::DEFAULT_DENSE_CAP_BYTES;
use ltibayes_core::oracle::DenseProblem;
use ltibayes_core::wave::{add_noise, synth_truth, BumpParams, WaveConfig, WaveSolver};
use ltibayes_core::{Layout, ObsSeries, PriorOp};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    engine: Engine,
    dense: DenseProblem,
    d_obs: ObsSeries,
}

fn instance(nx: usize, nt: usize, sensors: &[usize], rel_noise: f64) -> Instance {
    let cfg = WaveConfig::uniform(nx, 8, 50.0, 0.1, 8, sensors, &[nx / 4, 3 * nx / 4]);
    let solver = WaveSolver::new(&cfg).unwrap();
    let f = solver.p2o_kernel(nt).unwrap();
    let fq = solver.p2q_kernel(nt).unwrap();
    let bump = BumpParams { center: 25.0 * nx as f64, width: 150.0, rise_time: 0.8, amplitude: 1.0 };
    let truth = synth_truth(&cfg, nt, &bump).unwrap();
    let (d, _) = solver.simulate_forward(&truth).unwrap();
    let (d_obs, sigma) = add_noise(&d, rel_noise, 7).unwrap();
    let prior = PriorOp::build(nx, cfg.hx, (4.0 * cfg.hx).powi(2), 1.0).unwrap();
    let dense = DenseProblem::new(&f, &fq, &prior, sigma * sigma, cfg.dt_obs, DEFAULT_DENSE_CAP_BYTES).unwrap();
    let mut engine = Engine::new(f, fq, prior, sigma * sigma, cfg.dt_obs).unwrap();
    engine.form_k(Assembly::Columns).unwrap();
    engine.form_qoi_maps().unwrap();
    Instance { engine, dense, d_obs }
}

fn small() -> Instance {
    instance(24, 12, &[3, 9, 15, 21], 0.01)
}

#[test]
fn k_matches_dense_assembly() {
    let inst = small();
    let k = inst.engine.hessian().unwrap().k();
    let want = inst.dense.k();
    assert!((k - &want).norm() <= 1e-10 * want.norm());
    assert!(inst.engine.hessian().unwrap().asymmetry() <= 1e-11);
    let mut fused = inst.engine.clone();
    fused.form_k(Assembly::Fused).unwrap();
    assert!((fused.hessian().unwrap().k() - k).norm() <= 1e-12 * k.norm());
}

#[test]
fn map_matches_normal_equations() {
    let inst = small();
    let map = inst.engine.infer_map(&inst.d_obs).unwrap();
    let want = inst.dense.map(inst.d_obs.values()).unwrap();
    assert!(relative_gap(map.m_map.values(), &want) <= 1e-8);
    assert!(map.smw_residual <= 1e-8, "{:e}", map.smw_residual);
    let zero = inst.engine.infer_map(&ObsSeries::zeros(4, 12, Layout::SpaceMajorRows)).unwrap();
    assert!(zero.m_map.values().iter().all(|&v| v == 0.0));
}

#[test]
fn qoi_chain_identity() {
    let inst = small();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..5 {
        let d = ObsSeries::from_fn(4, 12, Layout::SpaceMajorRows, |_, _| rng.gen_range(-1.0..1.0));
        let m = inst.engine.infer_map(&d).unwrap().m_map;
        let via_q = inst.engine.apply_q(&d).unwrap();
        let via_m = inst.engine.apply_fq(&m).unwrap();
        assert!(relative_gap(via_q.values(), via_m.values()) <= 1e-10);
    }
    let q = &inst.engine.qoi_maps().unwrap().q;
    let want = inst.dense.q_matrix().unwrap();
    assert!((q - &want).norm() <= 1e-8 * want.norm());
}

#[test]
fn qoi_covariance_matches_dense_and_contracts() {
    let inst = small();
    let cov = &inst.engine.qoi_maps().unwrap().gamma_post_q;
    let want = inst.dense.qoi_cov().unwrap();
    assert!((cov - &want).norm() <= 1e-8 * want.norm());
    assert_eq!(cov, &cov.transpose());
    let prior_q = inst.engine.prior_qoi_cov().unwrap();
    let scale = prior_q.norm();
    for i in 0..cov.nrows() {
        assert!(cov[(i, i)] >= -1e-10 * cov.norm());
        assert!(cov[(i, i)] <= prior_q[(i, i)] + 1e-10 * scale);
    }
}

/// The scale test multiplies σ² by 1e6 starting from unit signal-to-noise,
/// σ² = ‖F Γ F^T‖, so that the data term is 1e-6 of the prior.
#[test]
fn no_data_limit_recovers_prior() {
    let inst = small();
    let h = inst.engine.hessian().unwrap();
    let mut signal = h.k().clone();
    for i in 0..signal.nrows() {
        signal[(i, i)] -= h.sigma2();
    }
    let mut e = Engine::new(
        inst.engine.kernel_f().clone(),
        inst.engine.kernel_fq().clone(),
        inst.engine.prior().clone(),
        signal.norm() * 1e6,
        0.1,
    )
    .unwrap();
    e.form_k(Assembly::Columns).unwrap();
    let cov = e.form_qoi_maps().unwrap().gamma_post_q.clone();
    let prior_q = e.prior_qoi_cov().unwrap();
    assert!((&cov - &prior_q).norm() <= 1e-4 * prior_q.norm());
}

#[test]
fn qoi_variance_grows_with_noise() {
    let inst = small();
    let base = inst.engine.sigma2();
    let diags: Vec<DVector<f64>> = [1.0, 10.0, 100.0]
        .iter()
        .map(|s| {
            let mut e = Engine::new(
                inst.engine.kernel_f().clone(),
                inst.engine.kernel_fq().clone(),
                inst.engine.prior().clone(),
                base * s,
                0.1,
            )
            .unwrap();
            e.form_k(Assembly::Columns).unwrap();
            e.form_qoi_maps().unwrap().gamma_post_q.diagonal()
        })
        .collect();
    for w in diags.windows(2) {
        for (a, b) in w[0].iter().zip(w[1].iter()) {
            assert!(b + 1e-10 * b.abs().max(1e-300) >= *a);
        }
    }
}

#[test]
fn hutchinson_matches_dense_diagonal() {
    let inst = small();
    let want = inst.dense.displacement_var().unwrap();
    let est = inst.engine.pointwise_param_std(200, 2024).unwrap();
    for x in 0..want.len() {
        let gap = (est.diag[x] - want[x]).abs();
        assert!(gap <= 3.0 * est.stderr[x], "node {x}: {} vs {} (se {})", est.diag[x], want[x], est.stderr[x]);
    }
    let half = inst.engine.pointwise_param_std(100, 99).unwrap();
    let var = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    let ratio = var(&est.stderr) / var(&half.stderr);
    assert!((0.35..0.7).contains(&ratio), "{ratio}");
}

#[test]
fn outputs_are_deterministic() {
    let a = small();
    let b = small();
    assert_eq!(a.d_obs, b.d_obs);
    let sa = a.engine.summarize(&a.d_obs, 0.95, Some((8, 1))).unwrap();
    let sb = b.engine.summarize(&b.d_obs, 0.95, Some((8, 1))).unwrap();
    assert_eq!(sa.m_map, sb.m_map);
    assert_eq!(sa.pointwise_std, sb.pointwise_std);
    assert_eq!(sa.forecast.ci_upper, sb.forecast.ci_upper);
}
