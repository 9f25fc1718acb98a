//! Two-time-scale collaborative deep reinforcement learning for joint beam
//! management and RB-group allocation between an LEO satellite and a ground
//! UE, with non-learning baselines and an executable check suite for the
//! scheme's tabular convergence theory.

pub mod baselines;
pub mod channel;
pub mod drl;
pub mod environment;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod neural;
pub mod tabular;

pub use error::{Error, Result};
