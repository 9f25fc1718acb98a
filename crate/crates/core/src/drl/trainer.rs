//! The synchronous two-tier training loop.
//!
//! Cycle start: the satellite stores its previous transition, updates its
//! critic, downlinks `(s_H^k, a_H^k, R_H^{k−1})` with the advantage of the
//! previous cycle, and picks `a_H^k` by rollout over the latest reference
//! trajectory. Each slot the UE samples, steps and stores; every
//! `update_interval` slots it runs a critic step and a trust-region step.
//! Cycle end: the UE uplinks a fresh reference trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::memory::{ExperienceRecord, RecordedAction, ReplayMemory, Tier};
use super::overhead::CycleMessages;
use super::policy::{self, LowPolicy};
use super::rollout::{generate_reference_trajectory, rollout_select, EnvRolloutModel, ReferenceTrajectory};
use super::trpo::{critic_update, trpo_update, CriticOutcome, PolicySample, TrpoConfig, TrpoOutcome};
use crate::environment::{mix_seed, EnvConfig, Environment, GroupMask, HighTierAction, LowStep, LowTierAction};
use crate::error::{Error, Result};
use crate::harness::metrics::MetricRecord;
use crate::neural::{AdamConfig, NetworkSpec, PolicyParameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// UE maximizes `Ã_L + Ã_H` and uplinks reference trajectories.
    Proposed,
    /// UE maximizes `Ã_L` only; trajectories are still exchanged.
    SingleEstimation,
    /// No messages: the satellite assumes the UE repeats its last `T` actions.
    Independent,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::SingleEstimation => "single_estimation",
            Mode::Independent => "independent",
        }
    }

    pub fn high_weight(self) -> f64 {
        match self {
            Mode::Proposed => 1.0,
            _ => 0.0,
        }
    }

    pub fn exchanges_messages(self) -> bool {
        self != Mode::Independent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrlConfig {
    pub mode: Mode,
    /// Rollout depth `n̄` in cycles.
    pub n_bar: usize,
    pub trunk: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub trpo: TrpoConfig,
    pub adam: AdamConfig,
    pub critic_steps: usize,
    pub batch_size: usize,
    pub high_batch_size: usize,
    /// Slots between UE learning updates.
    pub update_interval: usize,
    pub low_capacity: usize,
    pub high_capacity: usize,
    /// Multiplies bit-rate rewards before learning.
    pub reward_scale: f64,
    /// Learning stops once an accepted update moves no parameter by more than this.
    pub epsilon: f64,
    /// Bytes per exchanged element.
    pub element_bytes: usize,
}

impl Default for DrlConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Proposed,
            n_bar: 8,
            trunk: vec![32],
            head_hidden: vec![16],
            value_hidden: vec![32],
            trpo: TrpoConfig::default(),
            adam: AdamConfig::default(),
            critic_steps: 5,
            batch_size: 64,
            high_batch_size: 32,
            update_interval: 10,
            low_capacity: 9600,
            high_capacity: 1200,
            reward_scale: 1e-6,
            epsilon: 1e-4,
            element_bytes: 4,
        }
    }
}

impl DrlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.update_interval == 0 || self.low_capacity == 0 || self.high_capacity == 0 {
            return Err(Error::InvalidArgument("batch sizes, capacities and update interval must be positive".into()));
        }
        if !(self.trpo.kl_limit > 0.0) || !(self.trpo.discount > 0.0 && self.trpo.discount < 1.0) {
            return Err(Error::InvalidArgument("kl_limit must be positive and discount in (0,1)".into()));
        }
        if !(self.reward_scale > 0.0) {
            return Err(Error::InvalidArgument("reward_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Aggregate learning diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub trpo_updates: usize,
    pub trpo_accepted: usize,
    /// Largest measured KL among accepted trust-region steps.
    pub max_accepted_kl: f64,
    /// Accepted steps whose KL exceeded the limit or whose surrogate did not improve.
    pub contract_violations: usize,
    /// Rejected steps after which any parameter differed bitwise.
    pub rejected_param_changes: usize,
    pub critic_updates: usize,
    pub high_records: usize,
    pub cycles: usize,
    pub converged_at_slot: Option<u64>,
    pub downlink_records: usize,
    pub uplink_trajectories: usize,
    pub exchanged_elements: usize,
}

#[derive(Debug, Clone)]
struct PendingLow {
    slot: u64,
    features: Vec<f64>,
    allowed: GroupMask,
    action: LowTierAction,
    reward: f64,
}

#[derive(Debug, Clone)]
struct PendingHigh {
    features: Vec<f64>,
    action: HighTierAction,
    reward: Option<f64>,
    slot: u64,
}

/// One trainer owns its environment, networks and memories.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: DrlConfig,
    env: Environment,
    pub policy: LowPolicy,
    pub value_low: PolicyParameters,
    pub value_high: PolicyParameters,
    low_memory: ReplayMemory<ExperienceRecord>,
    high_memory: ReplayMemory<ExperienceRecord>,
    rng: ChaCha8Rng,
    seed: u64,
    episode: u64,
    global_slot: u64,
    pending: Vec<PendingLow>,
    prev_high: Option<PendingHigh>,
    reference: Option<ReferenceTrajectory>,
    last_reward_high: f64,
    frozen: bool,
    pub stats: TrainingStats,
    pub trpo_log: Vec<TrpoOutcome>,
    pub messages: Vec<CycleMessages>,
    current_messages: CycleMessages,
}

impl Trainer {
    pub fn new(env_cfg: EnvConfig, cfg: DrlConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut env = Environment::new(env_cfg)?;
        env.reset_episode(mix_seed(seed, 0))?;
        let ec = env.config().clone();
        let low_in = policy::low_feature_len(ec.total_rbs, ec.rx_array.0 * ec.rx_array.1, ec.groups);
        let high_in = policy::high_feature_len(ec.cycle_len);
        let policy = LowPolicy::new(low_in, &cfg.trunk, &cfg.head_hidden, ec.groups, mix_seed(seed, 10))?;
        let value_low = PolicyParameters::init(NetworkSpec::value(low_in, &cfg.value_hidden), mix_seed(seed, 11), 1.0)?;
        let value_high = PolicyParameters::init(NetworkSpec::value(high_in, &cfg.value_hidden), mix_seed(seed, 12), 1.0)?;
        Ok(Self {
            low_memory: ReplayMemory::new(cfg.low_capacity),
            high_memory: ReplayMemory::new(cfg.high_capacity),
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 13)),
            cfg,
            env,
            policy,
            value_low,
            value_high,
            seed,
            episode: 0,
            global_slot: 0,
            pending: Vec::new(),
            prev_high: None,
            reference: None,
            last_reward_high: 0.0,
            frozen: false,
            stats: TrainingStats::default(),
            trpo_log: Vec::new(),
            messages: Vec::new(),
            current_messages: CycleMessages::default(),
        })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn global_slot(&self) -> u64 {
        self.global_slot
    }

    pub fn converged(&self) -> bool {
        self.frozen
    }

    pub fn low_memory(&self) -> &ReplayMemory<ExperienceRecord> {
        &self.low_memory
    }

    pub fn high_memory(&self) -> &ReplayMemory<ExperienceRecord> {
        &self.high_memory
    }

    fn high_features_now(&self) -> Vec<f64> {
        policy::high_features(&self.env.high_state(), self.env.config().orbit.radius())
    }

    fn low_features_now(&self, allowed: GroupMask) -> Vec<f64> {
        policy::low_features(self.env.low_state(), allowed, self.env.config().groups)
    }

    /// Closes the previous high-tier transition, updates the satellite critic
    /// and returns `Ã_H` of that cycle.
    fn close_high(&mut self, next: Option<Vec<f64>>) -> Result<f64> {
        let Some(prev) = self.prev_high.take() else {
            return Ok(0.0);
        };
        let reward = prev.reward.unwrap_or(0.0);
        let gamma = self.cfg.trpo.discount;
        let v_prev = self.value_high.predict(&prev.features)?[0];
        let target = match &next {
            Some(f) => reward + gamma * self.value_high.predict(f)?[0],
            None => reward,
        };
        let advantage = target - v_prev;
        self.high_memory.push(ExperienceRecord {
            tier: Tier::High,
            slot: prev.slot,
            state: prev.features,
            action: RecordedAction::High(prev.action),
            reward,
            allowed: prev.action.mask,
            target,
            high_advantage: advantage,
            next_state: next,
        });
        self.stats.high_records += 1;
        if !self.frozen {
            let k = self.cfg.high_batch_size.min(self.high_memory.len());
            let batch: Vec<ExperienceRecord> = self.high_memory.sample(&mut self.rng, k).into_iter().cloned().collect();
            let mut inputs = Vec::with_capacity(k);
            let mut targets = Vec::with_capacity(k);
            for r in &batch {
                let t = match &r.next_state {
                    Some(f) => r.reward + gamma * self.value_high.predict(f)?[0],
                    None => r.reward,
                };
                inputs.push(r.state.clone());
                targets.push(t);
            }
            critic_update(&mut self.value_high, &inputs, &targets, &self.cfg.adam, self.cfg.critic_steps)?;
        }
        Ok(advantage)
    }

    /// Moves the finished cycle's UE samples into the replay memory with
    /// bootstrapped discounted returns and the broadcast `Ã_H`.
    fn flush_pending(&mut self, next_features: Option<&[f64]>, adv_high: f64) -> Result<()> {
        let gamma = self.cfg.trpo.discount;
        let mut ret = match next_features {
            Some(f) => self.value_low.predict(f)?[0],
            None => 0.0,
        };
        let pending = std::mem::take(&mut self.pending);
        let mut targets = vec![0.0; pending.len()];
        for (i, p) in pending.iter().enumerate().rev() {
            ret = p.reward + gamma * ret;
            targets[i] = ret;
        }
        let w = if self.cfg.mode == Mode::Proposed { adv_high } else { 0.0 };
        for (p, t) in pending.into_iter().zip(targets) {
            self.low_memory.push(ExperienceRecord {
                tier: Tier::Low,
                slot: p.slot,
                state: p.features,
                action: RecordedAction::Low(p.action),
                reward: p.reward,
                allowed: p.allowed,
                target: t,
                high_advantage: w,
                next_state: None,
            });
        }
        Ok(())
    }

    fn learn_low(&mut self) -> Result<()> {
        if self.frozen || self.low_memory.is_empty() {
            return Ok(());
        }
        let k = self.cfg.batch_size.min(self.low_memory.len());
        let batch: Vec<ExperienceRecord> = self.low_memory.sample(&mut self.rng, k).into_iter().cloned().collect();
        let inputs: Vec<Vec<f64>> = batch.iter().map(|r| r.state.clone()).collect();
        let targets: Vec<f64> = batch.iter().map(|r| r.target).collect();
        let mut samples = Vec::with_capacity(k);
        for r in &batch {
            let RecordedAction::Low(action) = r.action else {
                continue;
            };
            samples.push(PolicySample {
                features: r.state.clone(),
                allowed: r.allowed,
                action,
                adv_low: r.target - self.value_low.predict(&r.state)?[0],
                adv_high: r.high_advantage,
            });
        }
        let before = self.policy.net.params.clone();
        let outcome = trpo_update(&mut self.policy, &samples, self.cfg.mode.high_weight(), &self.cfg.trpo)?;
        let changed = before
            .iter()
            .zip(&self.policy.net.params)
            .any(|(a, b)| a.to_bits() != b.to_bits());
        self.record_trpo(outcome, changed);
        let critic: CriticOutcome = critic_update(&mut self.value_low, &inputs, &targets, &self.cfg.adam, self.cfg.critic_steps)?;
        self.stats.critic_updates += 1;
        if outcome.accepted {
            let norm = outcome.update_inf_norm.max(critic.update_inf_norm);
            if norm < self.cfg.epsilon {
                self.frozen = true;
                self.stats.converged_at_slot = Some(self.global_slot);
            }
        }
        Ok(())
    }

    fn record_trpo(&mut self, o: TrpoOutcome, params_changed: bool) {
        self.stats.trpo_updates += 1;
        if !o.accepted && params_changed {
            self.stats.rejected_param_changes += 1;
        }
        if o.accepted {
            self.stats.trpo_accepted += 1;
            self.stats.max_accepted_kl = self.stats.max_accepted_kl.max(o.kl);
            if !(o.kl <= self.cfg.trpo.kl_limit) || !(o.surrogate_after > o.surrogate_before) {
                self.stats.contract_violations += 1;
            }
        }
        self.trpo_log.push(o);
    }

    /// UE actions the satellite assumes for the next `n̄` cycles.
    fn assumed_low_actions(&self) -> Result<Vec<LowTierAction>> {
        let ec = self.env.config();
        let n = self.cfg.n_bar * ec.cycle_len;
        if self.cfg.mode.exchanges_messages() {
            if let Some(r) = &self.reference {
                return Ok(r.actions.clone());
            }
            let f = self.low_features_now(GroupMask::full(ec.groups));
            return Ok(generate_reference_trajectory(&self.policy, &f, GroupMask::full(ec.groups), self.cfg.n_bar, ec.cycle_len, self.env.slot())?.actions);
        }
        let last = self.env.last_low_actions();
        let fallback = LowTierAction {
            beam_delta: (0, 0),
            mask: GroupMask::full(ec.groups),
        };
        Ok((0..n)
            .map(|i| if last.is_empty() { fallback } else { last[i % last.len()] })
            .collect())
    }

    fn start_cycle(&mut self) -> Result<()> {
        let features = self.high_features_now();
        let adv_high = self.close_high(Some(features.clone()))?;
        self.flush_pending(Some(&self.low_features_now(self.env.high_mask())), adv_high)?;

        let low = self.assumed_low_actions()?;
        let model = EnvRolloutModel {
            model: self.env.model_snapshot(),
            reward_scale: self.cfg.reward_scale,
            state: self.env.high_state(),
        };
        let idx = rollout_select(&model, &self.value_high, &low, self.cfg.n_bar, self.cfg.trpo.discount)?;
        let groups = self.env.config().groups;
        let action = HighTierAction::from_index(idx, groups);
        self.env.step_high(&action)?;
        self.prev_high = Some(PendingHigh {
            features,
            action,
            reward: None,
            slot: self.env.slot(),
        });
        self.stats.cycles += 1;
        let ec = self.env.config();
        self.current_messages = CycleMessages::default();
        if self.cfg.mode.exchanges_messages() {
            self.current_messages.downlink_records = 1;
            self.current_messages.downlink_elements = (3 + ec.cycle_len) + (2 + ec.total_rbs) + 1;
        }
        Ok(())
    }

    fn end_cycle(&mut self, step: &LowStep) -> Result<()> {
        let summary = step.cycle_end.as_ref().expect("cycle end");
        let r = summary.reward_high * self.cfg.reward_scale;
        self.last_reward_high = r;
        if let Some(p) = &mut self.prev_high {
            p.reward = Some(r);
        }
        let ec = self.env.config().clone();
        if step.done {
            let adv = self.close_high(None)?;
            self.flush_pending(None, adv)?;
            self.reference = None;
        } else if self.cfg.mode.exchanges_messages() {
            let full = GroupMask::full(ec.groups);
            let f = self.low_features_now(full);
            let traj = generate_reference_trajectory(&self.policy, &f, full, self.cfg.n_bar, ec.cycle_len, self.env.slot())?;
            self.current_messages.uplink_trajectories = 1;
            self.current_messages.uplink_elements = traj.actions.len() * (2 + ec.total_rbs);
            self.reference = Some(traj);
        }
        let m = self.current_messages;
        self.stats.downlink_records += m.downlink_records;
        self.stats.uplink_trajectories += m.uplink_trajectories;
        self.stats.exchanged_elements += m.total_elements();
        self.messages.push(m);
        Ok(())
    }

    /// Advances one slot, starting a new pass when the previous one ended.
    pub fn step(&mut self) -> Result<MetricRecord> {
        if self.env.done() {
            self.episode += 1;
            self.env.reset_episode(mix_seed(self.seed, self.episode))?;
            self.prev_high = None;
            self.pending.clear();
        }
        if self.env.at_cycle_boundary() {
            self.start_cycle()?;
        }
        let allowed = self.env.high_mask();
        let features = self.low_features_now(allowed);
        let action = self.policy.sample(&features, allowed, &mut self.rng)?;
        let step = self.env.step_low(&action)?;
        self.pending.push(PendingLow {
            slot: step.info.slot,
            features,
            allowed,
            action,
            reward: step.reward * self.cfg.reward_scale,
        });
        self.global_slot += 1;
        if step.cycle_end.is_some() {
            self.end_cycle(&step)?;
        }
        if self.global_slot % self.cfg.update_interval as u64 == 0 {
            self.learn_low()?;
        }
        Ok(MetricRecord::from_step(self.global_slot - 1, self.episode, &step, self.last_reward_high / self.cfg.reward_scale))
    }

    /// Runs `slots` slots and returns their records.
    pub fn run(&mut self, slots: u64) -> Result<Vec<MetricRecord>> {
        (0..slots).map(|_| self.step()).collect()
    }
}
