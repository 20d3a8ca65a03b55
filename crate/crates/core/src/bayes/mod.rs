//! Data-space posterior: Hessian formation and factorization, MAP
//! inference, QoI maps, credible intervals and pointwise uncertainty.

pub mod cg;
pub mod engine;
pub mod gram;
pub mod hessian;

pub use cg::{cg_map, CgResult};
pub use engine::{
    credible_multiplier, integrate_displacement, relative_gap, Engine, MapEstimate, ParamStd,
    PosteriorSummary, QoIForecast, QoIMaps,
};
pub use gram::{gram_columns, gram_fused};
pub use hessian::{factorize, form_k, form_k_fused, Assembly, DataSpaceHessian};
