//! Reference trajectories and the satellite's n̄-cycle rollout action selection.

use serde::{Deserialize, Serialize};

use super::policy::{self, LowPolicy};
use crate::environment::{apply_delta, EnvModel, GroupMask, HighTierAction, HighTierState, LowTierAction};
use crate::error::{Error, Result};
use crate::neural::PolicyParameters;

/// The UE's predicted actions for the next `n̄·T` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub actions: Vec<LowTierAction>,
    pub origin_slot: u64,
}

/// Rolls the policy over `n̄·T` virtual slots on frozen features with mode
/// (greedy) actions.
pub fn generate_reference_trajectory(
    policy: &LowPolicy,
    frozen_features: &[f64],
    allowed: GroupMask,
    n_bar: usize,
    cycle_len: usize,
    origin_slot: u64,
) -> Result<ReferenceTrajectory> {
    let len = n_bar * cycle_len;
    let mut actions = Vec::with_capacity(len);
    for _ in 0..len {
        actions.push(policy.mode(frozen_features, allowed)?);
    }
    Ok(ReferenceTrajectory { actions, origin_slot })
}

/// Simulator used by the satellite to score candidate actions.
pub trait RolloutModel {
    fn num_actions(&self) -> usize;

    /// Per-cycle rewards over `cycles` simulated cycles after taking `action`,
    /// with UE actions read from `low`, plus the features of the state reached.
    fn rollout(&self, action: usize, low: &[LowTierAction], cycles: usize) -> (Vec<f64>, Vec<f64>);

    fn rollout_all(&self, low: &[LowTierAction], cycles: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.num_actions()).map(|a| self.rollout(a, low, cycles)).collect()
    }
}

/// `Σ_{p<n̄} γ^p R_p + γ^n̄ V(s^{k+n̄})` for every action.
pub fn rollout_scores<M: RolloutModel>(
    model: &M,
    value: &PolicyParameters,
    low: &[LowTierAction],
    n_bar: usize,
    gamma: f64,
) -> Result<Vec<f64>> {
    model
        .rollout_all(low, n_bar)
        .into_iter()
        .map(|(rewards, terminal)| {
            let mut score = 0.0;
            let mut disc = 1.0;
            for r in rewards.iter().take(n_bar) {
                score += disc * r;
                disc *= gamma;
            }
            Ok(score + disc * value.predict(&terminal)?[0])
        })
        .collect()
}

/// Highest-scoring action index; ties go to the lowest index.
pub fn rollout_select<M: RolloutModel>(
    model: &M,
    value: &PolicyParameters,
    low: &[LowTierAction],
    n_bar: usize,
    gamma: f64,
) -> Result<usize> {
    if model.num_actions() == 0 {
        return Err(Error::InvalidArgument("empty high-tier action set".into()));
    }
    let scores = rollout_scores(model, value, low, n_bar, gamma)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::NonFinite("rollout score".into()));
        }
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Rollout model backed by a frozen environment snapshot.
///
/// Demand is replaced by its mean, the transmit beam is held after the
/// candidate's delta, and the candidate's RB groups stay open for all
/// simulated cycles. Rewards are multiplied by `reward_scale`.
#[derive(Debug, Clone)]
pub struct EnvRolloutModel {
    pub model: EnvModel,
    pub reward_scale: f64,
    pub state: HighTierState,
}

impl EnvRolloutModel {
    fn groups(&self) -> usize {
        self.model.link.cfg.groups
    }

    fn cycle_len(&self) -> usize {
        self.model.link.cfg.cycle_len
    }

    fn current_features(&self) -> Vec<f64> {
        policy::high_features(&self.state, self.model.link.cfg.orbit.radius())
    }

    /// Scores every mask for one transmit beam from per-slot group statistics.
    fn score_masks(
        &self,
        stats: &[crate::environment::GroupStats],
        low: &[LowTierAction],
        cycles: usize,
        terminal_slot: u64,
    ) -> Vec<(Vec<f64>, Vec<f64>)> {
        let cfg = &self.model.link.cfg;
        let groups = cfg.groups;
        let t = cfg.cycle_len;
        let size = cfg.group_size() as f64;
        let demand = self.model.expected_demand;
        let pos = crate::geometry::propagate(&cfg.orbit, terminal_slot).sat_position;
        (1..(1u32 << groups))
            .map(|m| {
                let mask = GroupMask(m);
                let mut rewards = Vec::with_capacity(cycles);
                for c in 0..cycles {
                    let mut acc = 0.0;
                    for p in 0..t {
                        let s = &stats[c * t + p];
                        let joint = GroupMask(mask.0 & low[c * t + p].mask.0);
                        let n = joint.count();
                        if n == 0 {
                            continue;
                        }
                        let thr: f64 = joint.groups().map(|g| s.rate[g]).sum();
                        if thr >= demand {
                            acc += thr / (n as f64 * size);
                        }
                    }
                    rewards.push(acc / t as f64 * self.reward_scale);
                }
                let terminal = if cycles == 0 {
                    self.current_features()
                } else {
                    let last = &stats[(cycles - 1) * t..cycles * t];
                    let hist: Vec<f64> = last
                        .iter()
                        .map(|s| mask.groups().map(|g| s.snr[g]).sum::<f64>() / (mask.count() as f64 * size))
                        .collect();
                    policy::high_features(
                        &HighTierState {
                            sat_position: pos,
                            avg_snr_history: hist,
                        },
                        cfg.orbit.radius(),
                    )
                };
                (rewards, terminal)
            })
            .collect()
    }
}

impl RolloutModel for EnvRolloutModel {
    fn num_actions(&self) -> usize {
        HighTierAction::count(self.groups())
    }

    fn rollout(&self, action: usize, low: &[LowTierAction], cycles: usize) -> (Vec<f64>, Vec<f64>) {
        let groups = self.groups();
        let a = HighTierAction::from_index(action, groups);
        let tx = apply_delta(self.model.tx_beam, a.beam_delta, self.model.link.cfg.delta());
        let n = cycles * self.cycle_len();
        let deltas: Vec<(i8, i8)> = low[..n].iter().map(|l| l.beam_delta).collect();
        let stats = self.model.group_stats(&[tx], &deltas).remove(0);
        let per_mask = self.score_masks(&stats, low, cycles, self.model.orbit_slot + n as u64);
        per_mask[a.mask.0 as usize - 1].clone()
    }

    fn rollout_all(&self, low: &[LowTierAction], cycles: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let delta = self.model.link.cfg.delta();
        let n = cycles * self.cycle_len();
        let deltas: Vec<(i8, i8)> = low[..n].iter().map(|l| l.beam_delta).collect();
        let beams: Vec<_> = (0..9)
            .map(|b| apply_delta(self.model.tx_beam, ((b / 3) as i8 - 1, (b % 3) as i8 - 1), delta))
            .collect();
        let stats = self.model.group_stats(&beams, &deltas);
        let terminal_slot = self.model.orbit_slot + n as u64;
        stats
            .iter()
            .flat_map(|s| self.score_masks(s, low, cycles, terminal_slot))
            .collect()
    }
}
