//! Collaborative two-time-scale learning: UE-side TRPO over summed tier
//! advantages, satellite-side n̄-cycle rollout with a learned tail value,
//! reference-trajectory exchange, replay memories and overhead accounting.

pub mod memory;
pub mod overhead;
pub mod policy;
pub mod rollout;
pub mod trainer;
pub mod trpo;

pub use memory::{estimate_advantages, discounted_returns, ExperienceRecord, RecordedAction, ReplayMemory, Tier};
pub use overhead::{comm_overhead, comm_overhead_elements, CycleMessages};
pub use policy::LowPolicy;
pub use rollout::{generate_reference_trajectory, rollout_select, ReferenceTrajectory, RolloutModel};
pub use trainer::{DrlConfig, Mode, Trainer, TrainingStats};
pub use trpo::{critic_update, trpo_update, CriticOutcome, PolicySample, TrpoConfig, TrpoOutcome};
