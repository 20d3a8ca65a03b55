use ltibayes_core::layout::rel_err;
use ltibayes_core::wave::{LtiSystem, WaveConfig, WaveSolver};
use ltibayes_core::{Layout, MatvecPlan, ObsSeries, QoISeries, SpaceTimeField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(rng: &mut ChaCha8Rng, rows: usize, nt: usize) -> SpaceTimeField {
    SpaceTimeField::from_fn(rows, nt, Layout::SpaceMajorRows, |_, _| rng.gen_range(-1.0..1.0))
}

fn tiny() -> WaveSolver {
    WaveSolver::new(&WaveConfig::uniform(8, 8, 50.0, 0.05, 4, &[1, 6], &[2, 5])).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn kernel_columns_match_forward_impulses() {
    let w = tiny();
    let nt = 12;
    let f = w.p2o_kernel(nt).unwrap();
    let fq = w.p2q_kernel(nt).unwrap();
    for x in 0..w.n_space() {
        let m = SpaceTimeField::from_fn(8, nt, Layout::SpaceMajorRows, |r, t| ((r, t) == (x, 0)) as u8 as f64);
        let (d, q) = w.simulate_forward(&m).unwrap();
        for s in 0..w.n_sensors() {
            let got = f.series(s, x);
            let want = &d.values()[s * nt..(s + 1) * nt];
            assert!(rel_err(got, want) < 1e-12, "sensor {s} node {x}");
        }
        for s in 0..w.n_qoi() {
            let got = fq.series(s, x);
            let want = &q.values()[s * nt..(s + 1) * nt];
            assert!(rel_err(got, want) < 1e-12, "qoi {s} node {x}");
        }
    }
}

#[test]
fn kernels_agree_with_materialized_interval_system() {
    let w = tiny();
    let sys = LtiSystem::from_wave(&w).unwrap();
    let (f, fq) = ltibayes_core::wave::lti_impulse_kernel(&sys, 10).unwrap();
    assert!(rel_err(w.p2o_kernel(10).unwrap().data(), f.data()) < 1e-11);
    assert!(rel_err(w.p2q_kernel(10).unwrap().data(), fq.data()) < 1e-11);
}

#[test]
fn adjoint_sweep_passes_dot_product_test() {
    let w = tiny();
    let nt = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let m = random_field(&mut rng, 8, nt);
        let wd = ObsSeries::from_fn(2, nt, Layout::SpaceMajorRows, |_, _| rng.gen_range(-1.0..1.0));
        let wq = QoISeries::from_fn(2, nt, Layout::SpaceMajorRows, |_, _| rng.gen_range(-1.0..1.0));
        let (d, q) = w.simulate_forward(&m).unwrap();
        let adj = w.simulate_adjoint(&wd, &wq).unwrap();
        let lhs = dot(d.values(), wd.values()) + dot(q.values(), wq.values());
        let rhs = dot(m.values(), adj.values());
        let scale = (d.norm().powi(2) + q.norm().powi(2)).sqrt() * (wd.norm().powi(2) + wq.norm().powi(2)).sqrt();
        assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }
}

#[test]
fn qoi_convolution_reproduces_forward_run() {
    let cfg = WaveConfig::uniform(32, 12, 50.0, 0.1, 8, &[3, 17, 28], &[5, 16, 30]);
    let w = WaveSolver::new(&cfg).unwrap();
    let nt = 24;
    let plan_f = MatvecPlan::new(&w.p2o_kernel(nt).unwrap());
    let plan_q = MatvecPlan::new(&w.p2q_kernel(nt).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..3 {
        let m = random_field(&mut rng, 32, nt);
        let (d, q) = w.simulate_forward(&m).unwrap();
        let d_fft: ObsSeries = plan_f.apply(&m).unwrap();
        let q_fft: QoISeries = plan_q.apply(&m).unwrap();
        assert!(rel_err(d_fft.values(), d.values()) < 1e-10);
        assert!(rel_err(q_fft.values(), q.values()) < 1e-10);
    }
}

/// Beyond 1.5 c t the response must vanish up to the tails of the discrete
/// operator, which decay like `J_n(c t / h)` in the node distance `n`. A
/// 1 Hz sampling rate on a 25 m grid resolves each interval with 60 cells,
/// enough to push those tails below the tolerance.
#[test]
fn causality_shadow() {
    let cfg = WaveConfig::uniform(300, 9, 25.0, 1.0, 120, &[10, 150], &[32]);
    let w = WaveSolver::new(&cfg).unwrap();
    let c = cfg.sound_speed();
    for j in 0..w.n_sensors() {
        let nt = 3;
        let slice = w.adjoint_kernel_for_sensor(j, nt).unwrap();
        let peak = slice.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sensor_x = w.sensor_nodes()[j] as f64 * cfg.hx;
        let mut checked = 0;
        for x in 0..w.n_space() {
            let dist = (x as f64 * cfg.hx - sensor_x).abs();
            for k in 0..nt {
                // Lag index k is the response (k + 1) intervals after onset.
                if dist > 1.5 * c * (k + 1) as f64 * cfg.dt_obs {
                    checked += 1;
                    let v = slice[x * nt + k].abs();
                    assert!(v <= 1e-8 * peak, "sensor {j} node {x} lag {k}: {v:e} vs peak {peak:e}");
                }
            }
        }
        assert!(checked > 100);
    }
}

#[test]
fn stiff_surface_suppresses_wave_height() {
    let mut cfg = WaveConfig::uniform(16, 6, 50.0, 0.1, 64, &[4], &[8]);
    let nt = 20;
    let soft = WaveSolver::new(&cfg).unwrap().p2q_kernel(nt).unwrap().max_abs();
    assert!(soft > 0.0);
    let mut last = soft;
    for scale in [1e2, 1e4, 1e6] {
        cfg.gravity = 9.81 * scale;
        let stiff = WaveSolver::new(&cfg).unwrap().p2q_kernel(nt).unwrap().max_abs();
        assert!(stiff < last, "g x {scale:e}: {stiff:e} vs {last:e}");
        last = stiff;
    }
    assert!(last < 5e-3 * soft, "{last:e} vs {soft:e}");
}

#[test]
fn forward_is_linear() {
    let w = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let a = random_field(&mut rng, 8, 6);
    let b = random_field(&mut rng, 8, 6);
    let sum = a.axpy(1.0, &b).unwrap();
    let (da, qa) = w.simulate_forward(&a).unwrap();
    let (db, qb) = w.simulate_forward(&b).unwrap();
    let (ds, qs) = w.simulate_forward(&sum).unwrap();
    assert!(rel_err(ds.values(), da.axpy(1.0, &db).unwrap().values()) < 1e-13);
    assert!(rel_err(qs.values(), qa.axpy(1.0, &qb).unwrap().values()) < 1e-13);
}

#[test]
fn unstable_configuration_is_reported() {
    let mut cfg = WaveConfig::uniform(8, 8, 50.0, 0.1, 8, &[1], &[2]);
    cfg.substeps = 1;
    let err = WaveSolver::new(&cfg).unwrap_err().to_string();
    assert!(err.contains("CFL"));
}
