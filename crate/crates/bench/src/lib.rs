//! Shared inputs for the criterion benches.

use ltibayes_core::bayes::Assembly;
use ltibayes_core::wave::{add_noise, synth_truth, BumpParams, WaveConfig, WaveSolver};
use ltibayes_core::{BlockToeplitzKernel, Engine, ObsSeries, PriorOp, Provenance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_kernel(n_d: usize, n_m: usize, n_t: usize, seed: u64) -> BlockToeplitzKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BlockToeplitzKernel::from_fn(n_d, n_m, n_t, Provenance::F, |_, _, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// A wave-derived engine with `K` and the QoI maps formed, plus noisy
/// data: `nx` bottom nodes, a sensor every `stride` nodes, four forecast
/// points, `n_t` steps of 0.05 s.
pub fn wave_engine(nx: usize, stride: usize, n_t: usize) -> (Engine, ObsSeries) {
    let sensors: Vec<usize> = (stride / 2..nx).step_by(stride).collect();
    let qoi: Vec<usize> = (1..=4).map(|i| i * nx / 5).collect();
    let cfg = WaveConfig::uniform(nx, 24, 50.0, 0.05, 4, &sensors, &qoi);
    let solver = WaveSolver::new(&cfg).expect("valid bench config");
    let bump = BumpParams { center: 25.0 * nx as f64, width: 800.0, rise_time: 2.0, amplitude: 1.0 };
    let truth = synth_truth(&cfg, n_t, &bump).expect("bump");
    let (d, _) = solver.simulate_forward(&truth).expect("forward");
    let (d_obs, sigma) = add_noise(&d, 0.01, 1).expect("noise");
    let prior = PriorOp::build(nx, cfg.hx, (4.0 * cfg.hx).powi(2), 1.0).expect("prior");
    let mut engine = Engine::new(
        solver.p2o_kernel(n_t).expect("kernel"),
        solver.p2q_kernel(n_t).expect("kernel"),
        prior,
        sigma * sigma,
        cfg.dt_obs,
    )
    .expect("engine");
    engine.form_k(Assembly::Columns).expect("K");
    engine.form_qoi_maps().expect("Q");
    (engine, d_obs)
}
