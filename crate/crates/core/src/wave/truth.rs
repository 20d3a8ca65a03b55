//! Synthetic seafloor sources and noisy observations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::WaveConfig;
use crate::error::{Error, Result};
use crate::layout::{Layout, ObsSeries, SpaceTimeField};

/// Gaussian uplift of height `amplitude` centred at `center` (m), grown
/// smoothly over `rise_time` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpParams {
    pub center: f64,
    pub width: f64,
    pub rise_time: f64,
    pub amplitude: f64,
}

/// Quintic smoothstep from 0 at `t <= 0` to 1 at `t >= tau`.
fn ramp(t: f64, tau: f64) -> f64 {
    let u = (t / tau).clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

/// Seafloor velocity whose time integral is the bump. The value on
/// interval `j` is the ramp increment over that interval divided by
/// `dt_obs`, so the left-endpoint sum telescopes to the uplift exactly once
/// the ramp has finished.
pub fn synth_truth(cfg: &WaveConfig, n_time: usize, bump: &BumpParams) -> Result<SpaceTimeField> {
    if !(bump.rise_time > 0.0) {
        return Err(Error::Config(format!("truth.rise_time must be positive, got {}", bump.rise_time)));
    }
    if !(bump.width > 0.0) {
        return Err(Error::Config(format!("truth.width must be positive, got {}", bump.width)));
    }
    let dt = cfg.dt_obs;
    let rate: Vec<f64> = (0..n_time)
        .map(|j| (ramp((j + 1) as f64 * dt, bump.rise_time) - ramp(j as f64 * dt, bump.rise_time)) / dt)
        .collect();
    Ok(SpaceTimeField::from_fn(cfg.nx(), n_time, Layout::SpaceMajorRows, |x, t| {
        let dx = x as f64 * cfg.hx - bump.center;
        bump.amplitude * (-dx * dx / (2.0 * bump.width * bump.width)).exp() * rate[t]
    }))
}

/// Adds i.i.d. Gaussian noise with standard deviation `rel * max|d|`.
/// The returned σ is floored at `1e-12 * max(1, max|d|)` so that the noise
/// covariance stays invertible even for noise-free data.
pub fn add_noise(d: &ObsSeries, rel: f64, seed: u64) -> Result<(ObsSeries, f64)> {
    if !(rel >= 0.0) || !rel.is_finite() {
        return Err(Error::Config(format!("noise.rel must be non-negative, got {rel}")));
    }
    let peak = d.max_abs();
    let sigma = rel * peak;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = d.clone();
    if sigma > 0.0 {
        for v in out.values_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    Ok((out, sigma.max(1e-12 * peak.max(1.0))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> WaveConfig {
        WaveConfig::uniform(41, 5, 50.0, 0.1, 8, &[3], &[4])
    }

    fn bump() -> BumpParams {
        BumpParams { center: 1000.0, width: 200.0, rise_time: 1.5, amplitude: 2.0 }
    }

    #[test]
    fn integrates_to_gaussian() {
        let c = cfg();
        let m = synth_truth(&c, 20, &bump()).unwrap();
        for x in 0..c.nx() {
            let total: f64 = (0..20).map(|t| m.get(x, t) * c.dt_obs).sum();
            let dx = x as f64 * 50.0 - 1000.0;
            let want = 2.0 * (-dx * dx / (2.0 * 200.0f64.powi(2))).exp();
            assert!((total - want).abs() < 1e-12, "{total} vs {want}");
        }
    }

    #[test]
    fn zero_amplitude_and_peak() {
        let c = cfg();
        let mut b = bump();
        b.amplitude = 0.0;
        assert!(synth_truth(&c, 10, &b).unwrap().values().iter().all(|&v| v == 0.0));
        let m = synth_truth(&c, 10, &bump()).unwrap();
        let col: Vec<f64> = (0..c.nx()).map(|x| m.get(x, 5)).collect();
        let argmax = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 20);
    }

    #[test]
    fn bad_bump() {
        let mut b = bump();
        b.rise_time = 0.0;
        assert!(matches!(synth_truth(&cfg(), 4, &b), Err(Error::Config(_))));
        let mut b = bump();
        b.width = -1.0;
        assert!(synth_truth(&cfg(), 4, &b).is_err());
    }

    #[test]
    fn noise_contract() {
        let mut d = ObsSeries::from_fn(2, 50, Layout::SpaceMajorRows, |s, t| (s + t) as f64);
        d.values_mut()[7] = -200.0;
        let (clean, s0) = add_noise(&d, 0.0, 1).unwrap();
        assert_eq!(clean, d);
        assert_eq!(s0, 1e-12 * 200.0);
        let (a, sigma) = add_noise(&d, 0.01, 42).unwrap();
        assert_eq!(sigma, 2.0);
        let (b, _) = add_noise(&d, 0.01, 42).unwrap();
        assert_eq!(a, b);
        let (c, _) = add_noise(&d, 0.01, 43).unwrap();
        assert_ne!(a, c);
        assert!(add_noise(&d, -0.1, 1).is_err());
    }

    #[test]
    fn noise_sample_std() {
        let d = ObsSeries::from_fn(4, 5000, Layout::SpaceMajorRows, |s, t| ((s * 7 + t) % 13) as f64 - 6.0);
        let (noisy, sigma) = add_noise(&d, 0.05, 9).unwrap();
        let diffs: Vec<f64> = noisy.values().iter().zip(d.values()).map(|(a, b)| a - b).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.05);
    }
}
