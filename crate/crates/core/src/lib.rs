//! Physics-guided monotone LSTM for lake temperature profiles.
//!
//! The depth recurrence carries water density as an explicit state that can
//! only grow by a ReLU-gated increment, so every predicted density profile is
//! nondecreasing with depth for any weights, inputs or dropout masks. A small
//! head maps density plus drivers back to temperature. Plain-LSTM and
//! physics-loss baselines, MC dropout sampling, the evaluation metrics and a
//! synthetic lake generator are included.

pub mod config;
pub mod data;
pub mod math;
pub mod models;
pub mod physics;
pub mod pipeline;
pub mod training;
pub mod uq;

pub use math::{MathError, ParamStore, Rng, Tape, Tensor, Var};
pub use models::ModelKind;
