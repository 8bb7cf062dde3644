//! MC dropout sampling, error metrics and percentile calibration.

mod calibration;
mod metrics;
mod report;
mod samples;
mod sampling;

use thiserror::Error;

pub use calibration::{calibration_curve, two_tailed_percentile, CalibrationCurve, Percentile};
pub use metrics::{depth_variance, rmse_mean, rmse_per_sample, Summary, Truth};
pub use report::{evaluate, write_profiles_csv, MetricsReport, PooledMetrics, RunMetrics};
pub use samples::McSampleSet;
pub use sampling::{mc_sample, McConfig};

use crate::models::ModelError;
use crate::physics::PhysicsError;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidDropout(f64),
    #[error("no {0}")]
    Empty(&'static str),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}
