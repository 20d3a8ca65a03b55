use std::path::{Path, PathBuf};
use std::time::Instant;

use ltibayes_core::archive::{dense_to_bytes, kernel_to_bytes};
use ltibayes_core::wave::WaveSolver;
use ltibayes_core::{Engine, Layout, ObsSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure_dir, names, Options};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::read_sigma;
use crate::manifest::{Manifest, PhaseTime};

/// Tolerance of the self-check run after Phase 3.
pub const SMW_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OfflineReport {
    pub out_dir: PathBuf,
    /// True when matching artifacts were already present.
    pub skipped: bool,
    pub manifest: Manifest,
}

/// The noise level the offline phase uses: `[noise] sigma` if set,
/// otherwise the value `simulate` left in the artifact directory.
pub fn resolve_sigma(cfg: &RunConfig, dir: &Path) -> Result<f64> {
    if let Some(s) = cfg.noise.sigma {
        return Ok(s);
    }
    let path = dir.join(names::SIGMA);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "noise.sigma is not set and {} does not exist; run simulate first or set it",
            path.display()
        )));
    }
    read_sigma(&path)
}

/// Phases 1 to 3: adjoint solves for the kernels, prior premultiplication,
/// the data-space Hessian and its factor, then `Q` and the QoI posterior
/// covariance. Skips all work when the manifest in the output directory
/// matches the configuration and every artifact hash checks out.
pub fn offline(cfg: &RunConfig, opts: &Options) -> Result<OfflineReport> {
    let dir = opts.out_dir(cfg);
    ensure_dir(&dir)?;
    let sigma = resolve_sigma(cfg, &dir)?;
    let config_hash = cfg.offline_hash(sigma);

    if let Ok(Some(existing)) = Manifest::load(&dir) {
        if existing.config_hash == config_hash && existing.verify_all(&dir).is_ok() {
            opts.say(format!("offline: artifacts in {} are up to date", dir.display()));
            return Ok(OfflineReport { out_dir: dir, skipped: true, manifest: existing });
        }
    }

    let mut man = Manifest { config_hash, sigma, ..Default::default() };
    let nt = cfg.dims.n_time;
    let phase = |m: &mut Manifest, name: &str, t0: Instant| {
        let s = t0.elapsed().as_secs_f64();
        m.phases.push(PhaseTime { name: name.to_string(), seconds: s });
        s
    };

    let t0 = Instant::now();
    let (kf, kfq, solves) = (|| -> Result<_> {
        let solver = WaveSolver::new(&cfg.wave)?;
        let kf = solver.p2o_kernel(nt)?;
        let kfq = solver.p2q_kernel(nt)?;
        Ok((kf, kfq, solver.n_sensors() + solver.n_qoi()))
    })()
    .map_err(|e| e.in_phase("adjoint_solves"))?;
    man.pde_solves = solves;
    let s = phase(&mut man, "adjoint_solves", t0);
    man.store(&dir, names::F, &kernel_to_bytes(&kf), s)?;
    man.store(&dir, names::FQ, &kernel_to_bytes(&kfq), s)?;

    let t0 = Instant::now();
    let mut engine = (|| -> Result<Engine> {
        let prior = cfg.build_prior()?;
        Ok(Engine::new(kf, kfq, prior, sigma * sigma, cfg.wave.dt_obs)?)
    })()
    .map_err(|e| e.in_phase("premultiply"))?;
    let s = phase(&mut man, "premultiply", t0);
    man.store(&dir, names::GSTAR, &kernel_to_bytes(engine.kernel_g()), s)?;
    man.store(&dir, names::GQSTAR, &kernel_to_bytes(engine.kernel_gq()), s)?;

    let t0 = Instant::now();
    engine
        .form_k(cfg.offline.assembly.assembly())
        .map_err(|e| CliError::from(e).in_phase("form_k"))?;
    let s = phase(&mut man, "form_k", t0);
    let h = engine.hessian()?;
    man.store(&dir, names::K, &dense_to_bytes(h.k(), true), s)?;
    man.store(&dir, names::K_CHOL, &dense_to_bytes(h.chol(), false), s)?;

    let t0 = Instant::now();
    engine.form_qoi_maps().map_err(|e| CliError::from(e).in_phase("qoi_maps"))?;
    let s = phase(&mut man, "qoi_maps", t0);
    let maps = engine.qoi_maps()?;
    man.store(&dir, names::Q, &dense_to_bytes(&maps.q, false), s)?;
    man.store(&dir, names::GAMMA_POST_Q, &dense_to_bytes(&maps.gamma_post_q, true), s)?;

    let t0 = Instant::now();
    man.smw_residual = self_check(&engine).map_err(|e| e.in_phase("self_check"))?;
    phase(&mut man, "self_check", t0);

    // The manifest goes last so an interrupted run never looks complete.
    man.save(&dir)?;
    opts.say(format!("offline: {} PDE solves, sigma = {:e}", man.pde_solves, sigma));
    for p in &man.phases {
        opts.say(format!("  {:<16}{:>10.3} s", p.name, p.seconds));
    }
    opts.say(format!("  SMW residual     {:.3e}", man.smw_residual));
    Ok(OfflineReport { out_dir: dir, skipped: false, manifest: man })
}

/// MAP estimate for a fixed pseudo-random data vector; fails when the
/// normal-equation residual exceeds [`SMW_TOLERANCE`].
fn self_check(engine: &Engine) -> Result<f64> {
    let dims = engine.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let scale = engine.sigma2().sqrt();
    let d = ObsSeries::from_fn(dims.n_sensors, dims.n_time, Layout::SpaceMajorRows, |_, _| {
        scale * rng.gen_range(-1.0..1.0)
    });
    let r = engine.infer_map(&d)?.smw_residual;
    if !(r <= SMW_TOLERANCE) {
        return Err(CliError::Core(ltibayes_core::Error::Numerical(format!(
            "SMW residual {r:e} exceeds {SMW_TOLERANCE:e}"
        ))));
    }
    Ok(r)
}
