//! Drifting-model toolkit: Laplace-kernel drift fields, lookahead drifting
//! targets, a small MLP generator trained by stop-gradient regression, toy 2D
//! datasets, two-sample metrics and numerical diagnostics.

pub mod batch;
pub mod datasets;
pub mod diagnostics;
pub mod drift;
pub mod error;
pub mod generator;
pub mod io;
pub mod lookahead;
pub mod metrics;
pub mod render;
pub mod rng;
pub mod trainer;

pub use batch::SampleBatch;
pub use drift::{attraction, drift, laplace_kernel, repulsion, weighted_mean, DriftConfig, DriftField, KernelShape};
pub use error::{Error, Result};
pub use lookahead::{lookahead_target, lookahead_trace, LookaheadPlan, LookaheadTrace};
pub use rng::Stream;
