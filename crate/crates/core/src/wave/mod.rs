//! 2D vertical-slice acoustic-gravity ocean model and a generic LTI
//! state-space backend.

pub mod config;
pub mod lti;
pub mod solver;
pub mod truth;

pub use config::WaveConfig;
pub use lti::{lti_impulse_kernel, LtiSystem};
pub use solver::{solver_invocations, WaveSolver, WaveState};
pub use truth::{add_noise, synth_truth, BumpParams};
