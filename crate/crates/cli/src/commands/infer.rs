use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use ltibayes_core::archive::{dense_from_bytes, kernel_from_bytes};
use ltibayes_core::bayes::PosteriorSummary;
use ltibayes_core::wave::solver_invocations;
use ltibayes_core::{DataSpaceHessian, Engine, ObsSeries, QoIMaps};

use super::{names, Options};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{read_series, write_series, write_text};
use crate::manifest::Manifest;

#[derive(Debug, Clone)]
pub struct InferReport {
    pub out_dir: PathBuf,
    /// Reading and hash-checking artifacts and data.
    pub load_seconds: f64,
    /// MAP point, forecast and optional pointwise std.
    pub compute_seconds: f64,
    /// Wave-solver calls made while the command ran.
    pub solver_calls: u64,
    pub summary: PosteriorSummary,
}

/// Loads the offline artifacts and checks them against the manifest and
/// the current configuration.
pub fn load_engine(cfg: &RunConfig, dir: &std::path::Path) -> Result<Engine> {
    let man = Manifest::load(dir)?
        .ok_or_else(|| CliError::Stale(format!("no manifest in {}; run offline first", dir.display())))?;
    if let Some(s) = cfg.noise.sigma {
        if s != man.sigma {
            return Err(CliError::Stale(format!(
                "artifacts were built with sigma = {:e}, config has {:e}",
                man.sigma, s
            )));
        }
    }
    if cfg.offline_hash(man.sigma) != man.config_hash {
        return Err(CliError::Stale(format!(
            "artifacts in {} were built from a different configuration; rerun offline",
            dir.display()
        )));
    }
    let kernel = |name: &str| -> Result<_> { Ok(kernel_from_bytes(&man.read_checked(dir, name)?)?) };
    let dense = |name: &str| -> Result<_> { Ok(dense_from_bytes(&man.read_checked(dir, name)?)?.0) };
    let sigma2 = man.sigma * man.sigma;
    let mut engine = Engine::from_kernels(
        kernel(names::F)?,
        kernel(names::FQ)?,
        kernel(names::GSTAR)?,
        kernel(names::GQSTAR)?,
        cfg.build_prior()?,
        sigma2,
        cfg.wave.dt_obs,
    )?;
    engine.set_hessian(DataSpaceHessian::from_parts(dense(names::K)?, dense(names::K_CHOL)?, sigma2)?)?;
    engine.set_qoi_maps(QoIMaps { q: dense(names::Q)?, gamma_post_q: dense(names::GAMMA_POST_Q)? })?;
    Ok(engine)
}

/// Phase 4: MAP point, QoI forecast with credible intervals, and (with
/// `--probes`) pointwise displacement std. Never runs the wave solver.
pub fn infer(cfg: &RunConfig, opts: &Options) -> Result<InferReport> {
    let calls_before = solver_invocations();
    let dir = opts.out_dir(cfg);
    let data_path = opts.data.clone().unwrap_or_else(|| dir.join("d_obs.f64"));

    let t0 = Instant::now();
    let engine = load_engine(cfg, &dir)?;
    let d_obs: ObsSeries = read_series(&data_path)?;
    let load_seconds = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let probes = (opts.probes > 0).then(|| (opts.probes, opts.seed.unwrap_or(cfg.noise.seed)));
    let summary = engine.summarize(&d_obs, opts.level, probes)?;
    let compute_seconds = t0.elapsed().as_secs_f64();
    let solver_calls = solver_invocations() - calls_before;

    write_outputs(cfg, &dir, &summary)?;
    let mut report_text = String::new();
    writeln!(report_text, "load_seconds {load_seconds:.6}").unwrap();
    writeln!(report_text, "compute_seconds {compute_seconds:.6}").unwrap();
    writeln!(report_text, "solver_calls {solver_calls}").unwrap();
    writeln!(report_text, "smw_residual {:e}", summary.smw_residual).unwrap();
    writeln!(report_text, "level {}", opts.level).unwrap();
    writeln!(report_text, "probes {}", opts.probes).unwrap();
    write_text(&dir.join("infer_report.txt"), &report_text)?;

    opts.say(format!("infer: data from {}", data_path.display()));
    opts.say(format!("  load     {:>10.4} s", load_seconds));
    opts.say(format!("  compute  {:>10.4} s", compute_seconds));
    opts.say(format!("  wave solver calls {solver_calls}"));
    opts.say(format!("  SMW residual {:.3e}", summary.smw_residual));
    opts.say(format!("  max |q_map| {:.6e} m", summary.forecast.q_map.max_abs()));
    Ok(InferReport { out_dir: dir, load_seconds, compute_seconds, solver_calls, summary })
}

fn write_outputs(cfg: &RunConfig, dir: &std::path::Path, s: &PosteriorSummary) -> Result<()> {
    write_series(dir, "m_map", &s.m_map)?;
    let mut disp = String::from("x,mean,std\n");
    for (i, mean) in s.displacement.iter().enumerate() {
        let x = i as f64 * cfg.wave.hx;
        match &s.pointwise_std {
            Some(std) => writeln!(disp, "{x},{mean:e},{:e}", std[i]).unwrap(),
            None => writeln!(disp, "{x},{mean:e},").unwrap(),
        }
    }
    write_text(&dir.join("map_displacement.csv"), &disp)?;

    let f = &s.forecast;
    let mut csv = String::from("qoi_id,t,mean,ci_lo,ci_hi\n");
    for r in 0..f.q_map.rows() {
        for k in 0..f.q_map.n_time() {
            // Value k is sampled at the end of observation interval k.
            let t = ((k + 1) as f64 * cfg.wave.dt_obs * 1e9).round() / 1e9;
            writeln!(
                csv,
                "{r},{t},{:e},{:e},{:e}",
                f.q_map.get(r, k),
                f.ci_lower.get(r, k),
                f.ci_upper.get(r, k)
            )
            .unwrap();
        }
    }
    write_text(&dir.join("qoi_forecast.csv"), &csv)
}
