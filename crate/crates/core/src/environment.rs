//! Two-time-scale LEO–UE environment.
//!
//! The satellite (high tier) adjusts its transmit beam and the RB groups it
//! opens once every `T` slots; the UE (low tier) adjusts its receive beam and
//! picks RB groups from the open set every slot.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::channel::{self, NoiseModel, ScatterConfig, ScatterProfile, UpaConfig};
use crate::error::{Error, Result};
use crate::geometry::{self, Direction, GeometrySnapshot, OrbitConfig, PanelFrame, PassWindow, Vec3};

/// Set of RB groups as a bit mask (bit `g` = group `g`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GroupMask(pub u32);

impl GroupMask {
    pub fn full(groups: usize) -> Self {
        GroupMask(((1u64 << groups) - 1) as u32)
    }

    pub fn contains(self, g: usize) -> bool {
        self.0 >> g & 1 == 1
    }

    pub fn is_subset_of(self, other: GroupMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn with(self, g: usize) -> Self {
        GroupMask(self.0 | 1 << g)
    }

    pub fn groups(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&g| self.contains(g))
    }
}

/// Environment parameters. `Default` follows the paper-scale setup; see
/// [`EnvConfig::desk`] for the reduced configuration used in tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub orbit: OrbitConfig,
    pub scatter: ScatterConfig,
    pub noise: NoiseModel,
    pub carrier_freq: f64,
    /// OFDM symbol duration used in `t = n·T_s`, `f = m/T_s`.
    pub symbol_duration: f64,
    pub tx_power_dbw: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub tx_array: (usize, usize),
    pub rx_array: (usize, usize),
    pub total_rbs: usize,
    pub groups: usize,
    /// Slots per high-tier control cycle.
    pub cycle_len: usize,
    /// Unit adjustment angle (degrees).
    pub delta_deg: f64,
    pub demand_mean: f64,
    /// Bits per demand unit.
    pub demand_unit: f64,
    /// Punishment coefficient on the rate shortfall.
    pub eta: f64,
    pub fifo_len: usize,
    pub min_elevation: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            orbit: OrbitConfig::default(),
            scatter: ScatterConfig::default(),
            noise: NoiseModel::default(),
            carrier_freq: 4e9,
            symbol_duration: 1.0 / 180e3,
            tx_power_dbw: 30.0,
            tx_gain_dbi: 30.0,
            rx_gain_dbi: 30.0,
            tx_array: (16, 16),
            rx_array: (8, 8),
            total_rbs: 100,
            groups: 5,
            cycle_len: 10,
            delta_deg: 5.0,
            demand_mean: 2.0,
            demand_unit: 10e6,
            eta: 0.1,
            fifo_len: 10,
            min_elevation: std::f64::consts::FRAC_PI_6,
        }
    }
}

impl EnvConfig {
    /// Reduced arrays and RB pool: `N_t = 4²`, `N_r = 2²`, `M = 20`.
    pub fn desk() -> Self {
        Self {
            tx_array: (4, 4),
            rx_array: (2, 2),
            total_rbs: 20,
            ..Self::default()
        }
    }

    pub fn tx_upa(&self) -> UpaConfig {
        UpaConfig::half_wavelength(self.tx_array.0, self.tx_array.1, self.carrier_freq)
    }

    pub fn rx_upa(&self) -> UpaConfig {
        UpaConfig::half_wavelength(self.rx_array.0, self.rx_array.1, self.carrier_freq)
    }

    pub fn group_size(&self) -> usize {
        self.total_rbs / self.groups
    }

    pub fn delta(&self) -> f64 {
        self.delta_deg.to_radians()
    }

    pub fn tx_power(&self) -> f64 {
        10f64.powf(self.tx_power_dbw / 10.0)
    }

    /// Pathloss with both antenna gains folded in.
    pub fn large_scale_gain(&self, distance: f64) -> f64 {
        geometry::pathloss(distance, self.carrier_freq) * 10f64.powf((self.tx_gain_dbi + self.rx_gain_dbi) / 10.0)
    }

    pub fn demand(&self, seed: u64) -> DemandProcess {
        DemandProcess {
            mean: self.demand_mean,
            unit: self.demand_unit,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.orbit.validate()?;
        if self.groups == 0 || self.groups > 31 || self.total_rbs % self.groups != 0 || self.total_rbs == 0 {
            return Err(Error::InvalidArgument(format!(
                "total_rbs ({}) must be a positive multiple of groups ({}), groups ≤ 31",
                self.total_rbs, self.groups
            )));
        }
        if self.cycle_len == 0 || self.fifo_len == 0 {
            return Err(Error::InvalidArgument("cycle_len and fifo_len must be positive".into()));
        }
        if self.tx_array.0 * self.tx_array.1 == 0 || self.rx_array.0 * self.rx_array.1 == 0 {
            return Err(Error::InvalidArgument("antenna arrays must be nonempty".into()));
        }
        Ok(())
    }
}

/// Poisson demand in units of `unit` bits, redrawn every slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandProcess {
    pub mean: f64,
    pub unit: f64,
    pub seed: u64,
}

/// Stateless 64-bit mixer used to derive per-(seed, index) streams.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Demand `D_UE^n` in bits for one slot, deterministic per `(seed, slot)`.
pub fn draw_demand(process: &DemandProcess, slot: u64) -> f64 {
    if process.mean <= 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(process.seed, slot));
    let k: f64 = Poisson::new(process.mean).expect("positive mean").sample(&mut rng);
    k * process.unit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighTierState {
    pub sat_position: Vec3,
    /// Average SNR over the open RBs for each slot of the previous cycle.
    pub avg_snr_history: Vec<f64>,
}

/// Beam deltas are integer multiples of Δ, ordered (azimuth, elevation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HighTierAction {
    pub beam_delta: (i8, i8),
    pub mask: GroupMask,
}

impl HighTierAction {
    pub fn count(groups: usize) -> usize {
        9 * ((1usize << groups) - 1)
    }

    /// Index `beam·(2^G − 1) + (mask − 1)` with `beam = 3(dθ+1) + (dφ+1)`.
    pub fn index(&self, groups: usize) -> usize {
        let beam = (3 * (self.beam_delta.0 + 1) + (self.beam_delta.1 + 1)) as usize;
        beam * ((1usize << groups) - 1) + self.mask.0 as usize - 1
    }

    pub fn from_index(index: usize, groups: usize) -> Self {
        let masks = (1usize << groups) - 1;
        let beam = index / masks;
        HighTierAction {
            beam_delta: ((beam / 3) as i8 - 1, (beam % 3) as i8 - 1),
            mask: GroupMask((index % masks + 1) as u32),
        }
    }

    pub fn hold(groups: usize) -> Self {
        HighTierAction {
            beam_delta: (0, 0),
            mask: GroupMask::full(groups),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowTierState {
    pub per_rb_snr: Vec<f64>,
    pub rx_signal_strengths: Vec<f64>,
}

/// Beam deltas in multiples of Δ from `-3..=3`, ordered (azimuth, elevation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LowTierAction {
    pub beam_delta: (i8, i8),
    pub mask: GroupMask,
}

/// Per-slot outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotInfo {
    pub slot: u64,
    pub demand: f64,
    /// `Σ b^L b c` over jointly selected RBs (bits/s).
    pub throughput: f64,
    /// Average rate over jointly selected RBs (0 for an empty selection).
    pub avg_selected_rate: f64,
    /// `min(Σ b^L b c − D, 0)`.
    pub omega: f64,
    pub rb_groups: usize,
    pub elevation: f64,
    pub low_mask: GroupMask,
    pub high_mask: GroupMask,
    pub rb_rates: Vec<f64>,
}

impl SlotInfo {
    pub fn demand_met(&self) -> bool {
        self.throughput >= self.demand
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub reward_high: f64,
    pub next_high_state: HighTierState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowStep {
    pub state: LowTierState,
    /// FIFO-smoothed reward `R_L`.
    pub reward: f64,
    /// Instantaneous reward `Ȓ_L`.
    pub instant_reward: f64,
    pub info: SlotInfo,
    pub cycle_end: Option<CycleSummary>,
    pub done: bool,
}

/// Instantaneous low-tier reward: average selected rate plus punishment.
pub fn low_reward(throughput: f64, selected_rbs: usize, demand: f64, eta: f64) -> (f64, f64) {
    let avg = if selected_rbs == 0 {
        0.0
    } else {
        throughput / selected_rbs as f64
    };
    let omega = (throughput - demand).min(0.0);
    (avg + eta * omega, omega)
}

/// High-tier cycle reward from the slots of one cycle.
pub fn high_reward(slots: &[SlotInfo], cycle_len: usize) -> f64 {
    let total: f64 = slots
        .iter()
        .filter(|s| s.demand_met())
        .map(|s| s.avg_selected_rate)
        .sum();
    total / cycle_len as f64
}

/// Average utilized RB groups and the satisfactory-error series `|Ω|`.
pub fn objective_metrics(log: &[SlotInfo]) -> (f64, Vec<f64>) {
    let groups = if log.is_empty() {
        0.0
    } else {
        log.iter().map(|s| s.rb_groups as f64).sum::<f64>() / log.len() as f64
    };
    (groups, log.iter().map(|s| s.omega.abs()).collect())
}

/// Clamps a beam direction into `[0, π]²` after a delta.
pub fn apply_delta(dir: Direction, delta: (i8, i8), unit: f64) -> Direction {
    Direction {
        azimuth: (dir.azimuth + delta.0 as f64 * unit).clamp(0.0, std::f64::consts::PI),
        elevation: (dir.elevation + delta.1 as f64 * unit).clamp(0.0, std::f64::consts::PI),
    }
}

/// Physical link evaluator shared by the environment and its model snapshots.
#[derive(Debug, Clone)]
pub struct Link {
    pub cfg: EnvConfig,
    pub tx: UpaConfig,
    pub rx: UpaConfig,
    pub profile: ScatterProfile,
}

/// Per-RB link quantities at one slot for one beam pair.
#[derive(Debug, Clone)]
pub struct LinkEval {
    pub geometry: GeometrySnapshot,
    pub snr: Vec<f64>,
    pub rates: Vec<f64>,
    pub channel: channel::MultipathChannel,
    pub tx_proj: Vec<Complex64>,
}

impl Link {
    pub fn new(cfg: &EnvConfig, channel_seed: u64) -> Result<Self> {
        Ok(Self {
            cfg: cfg.clone(),
            tx: cfg.tx_upa(),
            rx: cfg.rx_upa(),
            profile: ScatterProfile::draw(&cfg.scatter, channel_seed)?,
        })
    }

    pub fn channel_at(&self, orbit_slot: u64) -> (GeometrySnapshot, channel::MultipathChannel) {
        let geom = geometry::propagate(&self.cfg.orbit, orbit_slot);
        let (sp, up) = geometry::default_panels(&self.cfg.orbit, &geom);
        let los = geometry::compute_angles(&geom, &sp, &up);
        let ch = self.profile.realize(&geom, &los, self.cfg.carrier_freq);
        (geom, ch)
    }

    pub fn evaluate(&self, orbit_slot: u64, tx_beam: Direction, rx_beam: Direction) -> LinkEval {
        let (geom, ch) = self.channel_at(orbit_slot);
        let w_t = channel::steering_vector(&self.tx, tx_beam);
        let w_r = channel::steering_vector(&self.rx, rx_beam);
        let tx_proj: Vec<Complex64> = ch
            .paths
            .iter()
            .map(|p| channel::steering_vector(&self.tx, p.aod).inner(&w_t))
            .collect();
        let proj: Vec<Complex64> = ch
            .paths
            .iter()
            .zip(&tx_proj)
            .map(|(p, gt)| w_r.inner(&channel::steering_vector(&self.rx, p.aoa)) * gt)
            .collect();
        let gains = channel::rb_gains(&ch, &proj, orbit_slot, self.cfg.total_rbs, self.cfg.symbol_duration);
        let scale = self.cfg.tx_power() * self.cfg.large_scale_gain(geom.distance)
            / (self.rx.len() as f64 * self.cfg.noise.variance());
        let snr: Vec<f64> = gains.iter().map(|g| g * scale).collect();
        let rates = snr
            .iter()
            .map(|s| channel::rate(*s, self.cfg.noise.rb_bandwidth))
            .collect();
        LinkEval {
            geometry: geom,
            snr,
            rates,
            channel: ch,
            tx_proj,
        }
    }

    /// Per-antenna magnitude of `H_{n,m} w_t` averaged over the given RBs.
    pub fn rx_strengths(&self, eval: &LinkEval, orbit_slot: u64, rbs: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.rx.len()];
        if rbs.is_empty() {
            return out;
        }
        let ars: Vec<_> = eval
            .channel
            .paths
            .iter()
            .map(|p| channel::steering_vector(&self.rx, p.aoa))
            .collect();
        for &m in rbs {
            let c = channel::path_coefficients(&eval.channel, orbit_slot, m, self.cfg.symbol_duration);
            for (i, o) in out.iter_mut().enumerate() {
                let y: Complex64 = (0..ars.len()).map(|l| c[l] * eval.tx_proj[l] * ars[l].entries[i]).sum();
                *o += y.norm();
            }
        }
        for o in &mut out {
            *o /= rbs.len() as f64;
        }
        out
    }

    pub fn rbs_of(&self, mask: GroupMask) -> Vec<usize> {
        let size = self.cfg.group_size();
        mask.groups()
            .filter(|&g| g < self.cfg.groups)
            .flat_map(|g| g * size..(g + 1) * size)
            .collect()
    }
}

/// The two-tier environment for one satellite pass at a time.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    pass: PassWindow,
    link: Link,
    demand: DemandProcess,
    slot: u64,
    tx_beam: Direction,
    rx_beam: Direction,
    high_mask: GroupMask,
    fifo: VecDeque<f64>,
    cycle_slots: Vec<SlotInfo>,
    cycle_avg_snr: Vec<f64>,
    prev_avg_snr: Vec<f64>,
    low_state: LowTierState,
    last_low_actions: VecDeque<LowTierAction>,
}

/// Frozen copy of the environment's physical model for lookahead.
#[derive(Debug, Clone)]
pub struct EnvModel {
    pub link: Link,
    /// Orbit slot of the next slot to be simulated.
    pub orbit_slot: u64,
    pub tx_beam: Direction,
    pub rx_beam: Direction,
    pub expected_demand: f64,
}

impl Environment {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let pass = geometry::pass_window(&cfg.orbit, cfg.min_elevation)
            .ok_or_else(|| Error::InvalidArgument("orbit never reaches the minimum elevation".into()))?;
        let link = Link::new(&cfg, 0)?;
        let mut env = Self {
            demand: cfg.demand(0),
            pass,
            link,
            slot: 0,
            tx_beam: Direction::BORESIGHT,
            rx_beam: Direction::BORESIGHT,
            high_mask: GroupMask::full(cfg.groups),
            fifo: VecDeque::new(),
            cycle_slots: Vec::new(),
            cycle_avg_snr: Vec::new(),
            prev_avg_snr: vec![0.0; cfg.cycle_len],
            low_state: LowTierState {
                per_rb_snr: vec![0.0; cfg.total_rbs],
                rx_signal_strengths: vec![0.0; cfg.rx_array.0 * cfg.rx_array.1],
            },
            last_low_actions: VecDeque::new(),
            cfg,
        };
        env.reset_episode(0)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn pass(&self) -> PassWindow {
        self.pass
    }

    /// Starts a new pass; the seed drives the scattering draws and the demand.
    pub fn reset_episode(&mut self, seed: u64) -> Result<(HighTierState, LowTierState)> {
        self.link = Link::new(&self.cfg, mix_seed(seed, 1))?;
        self.demand = self.cfg.demand(mix_seed(seed, 2));
        self.slot = 0;
        self.tx_beam = Direction::BORESIGHT;
        self.rx_beam = Direction::BORESIGHT;
        self.high_mask = GroupMask::full(self.cfg.groups);
        self.fifo.clear();
        self.cycle_slots.clear();
        self.cycle_avg_snr.clear();
        self.prev_avg_snr = vec![0.0; self.cfg.cycle_len];
        self.low_state = LowTierState {
            per_rb_snr: vec![0.0; self.cfg.total_rbs],
            rx_signal_strengths: vec![0.0; self.link.rx.len()],
        };
        self.last_low_actions.clear();
        Ok((self.high_state(), self.low_state.clone()))
    }

    /// Slot index within the current episode.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn orbit_slot(&self) -> u64 {
        self.pass.first_slot + self.slot
    }

    pub fn episode_len(&self) -> u64 {
        self.pass.len
    }

    pub fn done(&self) -> bool {
        self.slot >= self.pass.len
    }

    pub fn at_cycle_boundary(&self) -> bool {
        self.slot % self.cfg.cycle_len as u64 == 0
    }

    pub fn high_mask(&self) -> GroupMask {
        self.high_mask
    }

    pub fn beams(&self) -> (Direction, Direction) {
        (self.tx_beam, self.rx_beam)
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn demand_process(&self) -> DemandProcess {
        self.demand
    }

    pub fn geometry(&self) -> GeometrySnapshot {
        geometry::propagate(&self.cfg.orbit, self.orbit_slot())
    }

    pub fn high_state(&self) -> HighTierState {
        HighTierState {
            sat_position: self.geometry().sat_position,
            avg_snr_history: self.prev_avg_snr.clone(),
        }
    }

    pub fn low_state(&self) -> &LowTierState {
        &self.low_state
    }

    /// The most recent low-tier actions (at most `T`), oldest first.
    pub fn last_low_actions(&self) -> Vec<LowTierAction> {
        self.last_low_actions.iter().copied().collect()
    }

    /// Applies the satellite's beam delta and RB groups for the next `T` slots.
    pub fn step_high(&mut self, action: &HighTierAction) -> Result<HighTierState> {
        if self.done() {
            return Err(Error::EpisodeEnded);
        }
        if !self.at_cycle_boundary() {
            return Err(Error::PhaseError {
                slot: self.slot,
                cycle: self.cfg.cycle_len,
            });
        }
        if action.mask.is_empty() || !action.mask.is_subset_of(GroupMask::full(self.cfg.groups)) {
            return Err(Error::InvalidArgument(format!("invalid high-tier mask {:#b}", action.mask.0)));
        }
        if action.beam_delta.0.abs() > 1 || action.beam_delta.1.abs() > 1 {
            return Err(Error::InvalidArgument("high-tier beam delta outside {-Δ, 0, Δ}".into()));
        }
        self.tx_beam = apply_delta(self.tx_beam, action.beam_delta, self.cfg.delta());
        self.high_mask = action.mask;
        Ok(self.high_state())
    }

    /// Points the beams directly (used by the non-learning beam baselines).
    pub fn set_beams(&mut self, tx: Direction, rx: Direction) {
        let clamp = |d: Direction| Direction {
            azimuth: d.azimuth.clamp(0.0, std::f64::consts::PI),
            elevation: d.elevation.clamp(0.0, std::f64::consts::PI),
        };
        self.tx_beam = clamp(tx);
        self.rx_beam = clamp(rx);
    }

    pub fn model_snapshot(&self) -> EnvModel {
        EnvModel {
            link: self.link.clone(),
            orbit_slot: self.orbit_slot(),
            tx_beam: self.tx_beam,
            rx_beam: self.rx_beam,
            expected_demand: self.cfg.demand_mean * self.cfg.demand_unit,
        }
    }

    pub fn step_low(&mut self, action: &LowTierAction) -> Result<LowStep> {
        if self.done() {
            return Err(Error::EpisodeEnded);
        }
        if !action.mask.is_subset_of(self.high_mask) {
            return Err(Error::MaskViolation {
                low: action.mask.0,
                high: self.high_mask.0,
            });
        }
        if action.beam_delta.0.abs() > 3 || action.beam_delta.1.abs() > 3 {
            return Err(Error::InvalidArgument("low-tier beam delta outside {-3Δ..3Δ}".into()));
        }
        self.rx_beam = apply_delta(self.rx_beam, action.beam_delta, self.cfg.delta());
        let orbit_slot = self.orbit_slot();
        let eval = self.link.evaluate(orbit_slot, self.tx_beam, self.rx_beam);
        let demand = draw_demand(&self.demand, self.slot);
        let selected = self.link.rbs_of(action.mask);
        let throughput: f64 = selected.iter().map(|&m| eval.rates[m]).sum();
        let (instant, omega) = low_reward(throughput, selected.len(), demand, self.cfg.eta);
        self.fifo.push_back(instant);
        while self.fifo.len() > self.cfg.fifo_len {
            self.fifo.pop_front();
        }
        let reward = self.fifo.iter().sum::<f64>() / self.fifo.len() as f64;

        let open = self.link.rbs_of(self.high_mask);
        let avg_snr = open.iter().map(|&m| eval.snr[m]).sum::<f64>() / open.len() as f64;
        self.cycle_avg_snr.push(avg_snr);

        let mut per_rb_snr = vec![0.0; self.cfg.total_rbs];
        for &m in &selected {
            per_rb_snr[m] = eval.snr[m];
        }
        let strengths = self.link.rx_strengths(&eval, orbit_slot, &selected);
        self.low_state = LowTierState {
            per_rb_snr,
            rx_signal_strengths: strengths,
        };
        let info = SlotInfo {
            slot: self.slot,
            demand,
            throughput,
            avg_selected_rate: if selected.is_empty() {
                0.0
            } else {
                throughput / selected.len() as f64
            },
            omega,
            rb_groups: action.mask.count(),
            elevation: eval.geometry.elevation,
            low_mask: action.mask,
            high_mask: self.high_mask,
            rb_rates: eval.rates,
        };
        self.cycle_slots.push(info.clone());
        self.last_low_actions.push_back(*action);
        while self.last_low_actions.len() > self.cfg.cycle_len {
            self.last_low_actions.pop_front();
        }
        self.slot += 1;
        let done = self.done();
        let cycle_end = if self.at_cycle_boundary() || done {
            let reward_high = high_reward(&self.cycle_slots, self.cfg.cycle_len);
            let mut hist = std::mem::take(&mut self.cycle_avg_snr);
            hist.resize(self.cfg.cycle_len, 0.0);
            self.prev_avg_snr = hist;
            self.cycle_slots.clear();
            Some(CycleSummary {
                reward_high,
                next_high_state: self.high_state(),
            })
        } else {
            None
        };
        Ok(LowStep {
            state: self.low_state.clone(),
            reward,
            instant_reward: instant,
            info,
            cycle_end,
            done,
        })
    }
}

impl EnvModel {
    /// Per-RB rates and SNRs over `rx_deltas.len()` future slots with a fixed
    /// transmit beam and receive beam deltas applied slot by slot.
    pub fn simulate(&self, tx_beam: Direction, rx_deltas: &[(i8, i8)]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rx = self.rx_beam;
        let unit = self.link.cfg.delta();
        rx_deltas
            .iter()
            .enumerate()
            .map(|(p, d)| {
                rx = apply_delta(rx, *d, unit);
                let e = self.link.evaluate(self.orbit_slot + p as u64, tx_beam, rx);
                (e.rates, e.snr)
            })
            .collect()
    }
}

/// Per-group sums of rate and SNR at one simulated slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub rate: Vec<f64>,
    pub snr: Vec<f64>,
}

impl EnvModel {
    /// Group statistics for each candidate transmit beam (outer) and each of the
    /// `rx_deltas.len()` future slots (inner). Beam-independent channel terms
    /// are computed once per slot and shared by all candidates.
    pub fn group_stats(&self, tx_beams: &[Direction], rx_deltas: &[(i8, i8)]) -> Vec<Vec<GroupStats>> {
        let cfg = &self.link.cfg;
        let two_pi = 2.0 * std::f64::consts::PI;
        let unit = cfg.delta();
        let groups = cfg.groups;
        let size = cfg.group_size();
        let mut out = vec![Vec::with_capacity(rx_deltas.len()); tx_beams.len()];
        let w_ts: Vec<_> = tx_beams
            .iter()
            .map(|d| channel::steering_vector(&self.link.tx, *d))
            .collect();
        let mut rx = self.rx_beam;
        for (p, d) in rx_deltas.iter().enumerate() {
            rx = apply_delta(rx, *d, unit);
            let slot = self.orbit_slot + p as u64;
            let (geom, ch) = self.link.channel_at(slot);
            let w_r = channel::steering_vector(&self.link.rx, rx);
            let t = slot as f64 * cfg.symbol_duration;
            let base: Vec<Complex64> = ch
                .paths
                .iter()
                .map(|path| {
                    path.alpha
                        * w_r.inner(&channel::steering_vector(&self.link.rx, path.aoa))
                        * Complex64::from_polar(1.0, two_pi * (t * path.doppler).fract())
                })
                .collect();
            let delay_phase: Vec<Vec<Complex64>> = ch
                .paths
                .iter()
                .map(|path| {
                    (0..cfg.total_rbs)
                        .map(|m| {
                            let f = m as f64 / cfg.symbol_duration;
                            Complex64::from_polar(1.0, -two_pi * (f * path.delay).fract())
                        })
                        .collect()
                })
                .collect();
            let a_ts: Vec<_> = ch
                .paths
                .iter()
                .map(|path| channel::steering_vector(&self.link.tx, path.aod))
                .collect();
            let scale = cfg.tx_power() * cfg.large_scale_gain(geom.distance)
                / (self.link.rx.len() as f64 * cfg.noise.variance());
            for (b, w_t) in w_ts.iter().enumerate() {
                let weights: Vec<Complex64> = a_ts.iter().zip(&base).map(|(a, c)| c * a.inner(w_t)).collect();
                let mut stats = GroupStats {
                    rate: vec![0.0; groups],
                    snr: vec![0.0; groups],
                };
                for m in 0..cfg.total_rbs {
                    let h: Complex64 = (0..weights.len()).map(|l| weights[l] * delay_phase[l][m]).sum();
                    let snr = h.norm_sqr() * scale;
                    let g = m / size;
                    stats.snr[g] += snr;
                    stats.rate[g] += channel::rate(snr, cfg.noise.rb_bandwidth);
                }
                out[b].push(stats);
            }
        }
        out
    }
}

/// Panel frames of the environment's default geometry at an orbit slot.
pub fn panels_at(cfg: &EnvConfig, orbit_slot: u64) -> (PanelFrame, PanelFrame) {
    let g = geometry::propagate(&cfg.orbit, orbit_slot);
    geometry::default_panels(&cfg.orbit, &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn high_action_index_round_trip() {
        for i in 0..HighTierAction::count(5) {
            assert_eq!(HighTierAction::from_index(i, 5).index(5), i);
        }
        assert_eq!(HighTierAction::count(5), 279);
    }

    #[test]
    fn empty_selection_reward_is_pure_punishment() {
        let (r, omega) = low_reward(0.0, 0, 20e6, 0.1);
        assert_eq!(r, -2e6);
        assert_eq!(omega, -20e6);
    }

    #[test]
    fn exact_demand_has_no_punishment() {
        let (r, omega) = low_reward(12e6, 4, 12e6, 0.1);
        assert_eq!(omega, 0.0);
        assert_eq!(r, 3e6);
    }

    #[test]
    fn zero_mean_demand_is_zero() {
        let p = DemandProcess {
            mean: 0.0,
            unit: 10e6,
            seed: 1,
        };
        assert!((0..100).all(|s| draw_demand(&p, s) == 0.0));
    }

    #[test]
    fn fresh_reset_has_zero_history() {
        let mut env = Environment::new(EnvConfig::desk()).unwrap();
        let (h, l) = env.reset_episode(4).unwrap();
        assert!(h.avg_snr_history.iter().all(|&x| x == 0.0));
        assert_eq!(h.avg_snr_history.len(), 10);
        assert!(l.per_rb_snr.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mid_cycle_high_step_is_a_phase_error() {
        let mut env = Environment::new(EnvConfig::desk()).unwrap();
        env.step_high(&HighTierAction::hold(5)).unwrap();
        env.step_low(&LowTierAction {
            beam_delta: (0, 0),
            mask: GroupMask(1),
        })
        .unwrap();
        assert!(matches!(
            env.step_high(&HighTierAction::hold(5)),
            Err(Error::PhaseError { .. })
        ));
    }
}
