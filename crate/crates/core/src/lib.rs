//! Continual learning from demonstration.
//!
//! Neural ODE trajectory learners trained on a sequence of motion tasks under
//! several continual-learning strategies, plus the trajectory and
//! continual-learning metrics used to evaluate them.

pub mod error;
pub mod nn;
pub mod node;
pub mod so3;
pub mod traj_metrics;
pub mod cl_metrics;
pub mod strategies;

pub use error::{Error, Result};
