//! Metric-regularized policy gradients.

pub mod divergence;
pub mod error;
pub mod fourier;
pub mod geodesic;
pub mod math;
pub mod metric;
pub mod metric_net;
pub mod rl;
pub mod trainer;

pub use error::{Error, Result};
