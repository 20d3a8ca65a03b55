//! Offline-online Bayesian inversion for linear time-invariant systems.
//!
//! Parameter-to-observable maps of an LTI system are block lower-triangular
//! Toeplitz. This crate extracts their first block column from adjoint
//! solves of a 2D acoustic-gravity ocean model, applies them with FFTs,
//! and forms the data-space posterior so that MAP inference and forecast
//! uncertainty reduce to dense triangular solves and matvecs.

pub mod archive;
pub mod bayes;
pub mod error;
pub mod kernel;
pub mod layout;
pub mod matvec;
pub mod oracle;
pub mod prior;
pub mod wave;

pub use bayes::{Assembly, DataSpaceHessian, Engine, PosteriorSummary, QoIMaps};
pub use error::{Error, Result};
pub use kernel::{BlockToeplitzKernel, Direction, Provenance};
pub use layout::{Dims, Layout, ObsSeries, QoISeries, Series, SpaceTimeField};
pub use matvec::{MatvecPlan, MatvecScratch};
pub use prior::PriorOp;
pub use wave::{WaveConfig, WaveSolver, WaveState};
