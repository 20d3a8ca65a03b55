use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use ltibayes_core::bayes::{cg_map, relative_gap};
use ltibayes_core::matvec::{dense_apply, DEFAULT_DENSE_CAP_BYTES};
use ltibayes_core::wave::{add_noise, synth_truth, WaveSolver};
use ltibayes_core::{BlockToeplitzKernel, Engine, MatvecPlan, ObsSeries, Provenance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure_dir, Options};
use crate::config::RunConfig;
use crate::error::Result;
use crate::io::write_text;

pub const CG_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub op: &'static str,
    pub n_d: usize,
    pub n_m: usize,
    pub n_t: usize,
    pub wall_seconds: f64,
    pub gflops_est: f64,
}

#[derive(Debug, Clone)]
pub struct OnlineBench {
    pub n_d: usize,
    pub n_m: usize,
    pub n_t: usize,
    pub infer_seconds: f64,
    pub cg_seconds: f64,
    pub cg_iterations: usize,
    pub cg_converged: bool,
    /// Relative gap between the CG and direct MAP points.
    pub map_gap: f64,
}

impl OnlineBench {
    pub fn speedup(&self) -> f64 {
        self.cg_seconds / self.infer_seconds
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub out_dir: PathBuf,
    /// Two rows per sweep entry: `fft_apply` then `dense_apply`.
    pub rows: Vec<BenchRow>,
    pub online: Option<OnlineBench>,
}

impl BenchReport {
    /// Dense over FFT wall time for each sweep entry.
    pub fn fft_speedups(&self) -> Vec<(usize, f64)> {
        self.rows
            .chunks(2)
            .map(|p| (p[0].n_t, p[1].wall_seconds / p[0].wall_seconds))
            .collect()
    }
}

fn best_of<F: FnMut()>(reps: usize, mut f: F) -> f64 {
    (0..reps.max(1))
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Best-of-`reps` wall times of one FFT matvec and one dense matvec with a
/// random `n_d x n_m` kernel over `n_t` steps. The plan is built outside
/// the timed region.
pub fn time_matvec(n_d: usize, n_m: usize, n_t: usize, reps: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = BlockToeplitzKernel::from_fn(n_d, n_m, n_t, Provenance::F, |_, _, _| rng.gen_range(-1.0..1.0));
    let v: Vec<f64> = (0..n_m * n_t).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let plan = MatvecPlan::new(&k);
    let mut scratch = plan.make_scratch();
    let mut out = vec![0.0; n_d * n_t];
    let fft = best_of(reps, || plan.apply_into(&v, &mut out, &mut scratch));
    let mut dense_out = Vec::new();
    let mut failed = None;
    let dense = best_of(reps, || match dense_apply(&k, &v, false, DEFAULT_DENSE_CAP_BYTES) {
        Ok(o) => dense_out = o,
        Err(e) => failed = Some(e),
    });
    if let Some(e) = failed {
        return Err(e.into());
    }
    std::hint::black_box((&out, &dense_out));
    Ok((fft, dense))
}

fn fft_flops(n_d: usize, n_m: usize, n_t: usize) -> f64 {
    let n = 2.0 * n_t as f64;
    // Real transforms of every input and output row plus the complex
    // block products over n_t + 1 frequencies.
    2.5 * n * n.log2() * (n_d + n_m) as f64 + 8.0 * (n_d * n_m) as f64 * (n_t + 1) as f64
}

fn dense_flops(n_d: usize, n_m: usize, n_t: usize) -> f64 {
    (n_d * n_m) as f64 * (n_t * (n_t + 1)) as f64
}

/// Times the direct online MAP solve against prior-preconditioned CG on
/// the normal equations for the same data. The engine must hold `K`.
pub fn time_online_vs_cg(engine: &Engine, d_obs: &ObsSeries, reps: usize) -> Result<OnlineBench> {
    let dims = *engine.dims();
    let mut direct = None;
    let mut err = None;
    let infer_seconds = best_of(reps, || match engine.infer_map(d_obs) {
        Ok(m) => direct = Some(m),
        Err(e) => err = Some(e),
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    let t0 = Instant::now();
    let cg = cg_map(engine.plan_f(), engine.prior(), engine.sigma2(), d_obs, CG_TOLERANCE, 100_000)?;
    let cg_seconds = t0.elapsed().as_secs_f64();
    let direct = direct.expect("at least one repetition");
    Ok(OnlineBench {
        n_d: dims.n_sensors,
        n_m: dims.n_space,
        n_t: dims.n_time,
        infer_seconds,
        cg_seconds,
        cg_iterations: cg.iterations,
        cg_converged: cg.converged,
        map_gap: relative_gap(cg.m.values(), direct.m_map.values()),
    })
}

/// Builds an engine for the `[wave]` instance in memory and returns it
/// with noisy synthetic data.
pub fn build_instance(cfg: &RunConfig, seed: u64) -> Result<(Engine, ObsSeries)> {
    let nt = cfg.dims.n_time;
    let solver = WaveSolver::new(&cfg.wave)?;
    let truth = synth_truth(&cfg.wave, nt, &cfg.truth)?;
    let (d, _) = solver.simulate_forward(&truth)?;
    let (d_obs, derived) = add_noise(&d, cfg.noise.rel, seed)?;
    let sigma = cfg.noise.sigma.unwrap_or(derived);
    let mut engine = Engine::new(
        solver.p2o_kernel(nt)?,
        solver.p2q_kernel(nt)?,
        cfg.build_prior()?,
        sigma * sigma,
        cfg.wave.dt_obs,
    )?;
    engine.form_k(cfg.offline.assembly.assembly())?;
    Ok((engine, d_obs))
}

/// FFT vs dense matvec over the configured size sweep, then (with
/// `bench.cg`) direct online inference vs CG on the `[wave]` instance.
/// Writes `bench.csv`, `bench_online.csv` and `bench_summary.txt`.
pub fn bench(cfg: &RunConfig, opts: &Options) -> Result<BenchReport> {
    let dir = opts.out_dir(cfg);
    ensure_dir(&dir)?;
    let b = &cfg.bench;
    let seed = opts.seed.unwrap_or(cfg.noise.seed);
    let mut rows = Vec::new();
    for &nt in &b.n_time {
        let (fft, dense) = time_matvec(b.n_sensors, b.n_space, nt, b.reps, seed)?;
        rows.push(BenchRow {
            op: "fft_apply",
            n_d: b.n_sensors,
            n_m: b.n_space,
            n_t: nt,
            wall_seconds: fft,
            gflops_est: fft_flops(b.n_sensors, b.n_space, nt) / fft / 1e9,
        });
        rows.push(BenchRow {
            op: "dense_apply",
            n_d: b.n_sensors,
            n_m: b.n_space,
            n_t: nt,
            wall_seconds: dense,
            gflops_est: dense_flops(b.n_sensors, b.n_space, nt) / dense / 1e9,
        });
        opts.say(format!("bench: N_t = {nt:>6}  fft {fft:.3e} s  dense {dense:.3e} s  ratio {:.1}", dense / fft));
    }
    let mut csv = String::from("op,N_d,N_m,N_t,wall_seconds,gflops_est\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{},{:e},{:.4}", r.op, r.n_d, r.n_m, r.n_t, r.wall_seconds, r.gflops_est).unwrap();
    }
    write_text(&dir.join("bench.csv"), &csv)?;

    let online = if b.cg {
        let (engine, d_obs) = build_instance(cfg, seed)?;
        let o = time_online_vs_cg(&engine, &d_obs, b.reps)?;
        let mut csv = String::from("op,N_d,N_m,N_t,wall_seconds,iterations\n");
        writeln!(csv, "infer_map,{},{},{},{:e},0", o.n_d, o.n_m, o.n_t, o.infer_seconds).unwrap();
        writeln!(csv, "cg_map,{},{},{},{:e},{}", o.n_d, o.n_m, o.n_t, o.cg_seconds, o.cg_iterations).unwrap();
        write_text(&dir.join("bench_online.csv"), &csv)?;
        opts.say(format!(
            "bench: online infer {:.3e} s, CG {:.3e} s ({} iterations{}), ratio {:.1}",
            o.infer_seconds,
            o.cg_seconds,
            o.cg_iterations,
            if o.cg_converged { "" } else { ", not converged" },
            o.speedup()
        ));
        Some(o)
    } else {
        None
    };

    let report = BenchReport { out_dir: dir.clone(), rows, online };
    let mut summary = String::new();
    for (nt, ratio) in report.fft_speedups() {
        writeln!(summary, "fft_vs_dense N_t={nt} ratio={ratio:.2}").unwrap();
    }
    if let Some(o) = &report.online {
        writeln!(
            summary,
            "infer_vs_cg N_d={} N_m={} N_t={} ratio={:.2} cg_iterations={} map_gap={:.3e}",
            o.n_d,
            o.n_m,
            o.n_t,
            o.speedup(),
            o.cg_iterations,
            o.map_gap
        )
        .unwrap();
    }
    write_text(&dir.join("bench_summary.txt"), &summary)?;
    Ok(report)
}
