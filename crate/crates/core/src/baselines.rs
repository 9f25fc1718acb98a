//! Non-learning beam baselines (grid sweep and geometric pointing) composed
//! with greedy, fixed and UCB1 RB-group allocation.

use num_complex::Complex64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, MultipathChannel, UpaConfig};
use crate::environment::{
    draw_demand, mix_seed, panels_at, EnvConfig, Environment, GroupMask, HighTierAction, Link, LowTierAction,
};
use crate::error::{Error, Result};
use crate::geometry::{self, Direction};
use crate::harness::metrics::MetricRecord;

/// Angular sweep grid, identical for azimuth and elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamGrid {
    pub points: Vec<f64>,
}

impl BeamGrid {
    /// `n` evenly spaced points covering `[0, π]` including both ends.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("beam grid needs at least 2 points".into()));
        }
        let step = std::f64::consts::PI / (n - 1) as f64;
        Ok(Self {
            points: (0..n).map(|i| i as f64 * step).collect(),
        })
    }

    pub fn directions(&self) -> Vec<Direction> {
        let mut out = Vec::with_capacity(self.points.len() * self.points.len());
        for &az in &self.points {
            for &el in &self.points {
                out.push(Direction {
                    azimuth: az,
                    elevation: el,
                });
            }
        }
        out
    }
}

impl Default for BeamGrid {
    fn default() -> Self {
        Self::uniform(18).expect("18 points")
    }
}

/// Wideband beam gain `Σ_m |w_r^H H_m w_t|²` over a set of RBs, evaluated from
/// per-path projections.
#[derive(Debug, Clone)]
pub struct WidebandGain {
    /// Hermitian `Q_kl = Σ_m conj(c_km) c_lm`.
    q: Vec<Vec<Complex64>>,
    /// `|c_lm|` per RB, for the pruning bound.
    mags: Vec<Vec<f64>>,
}

impl WidebandGain {
    pub fn new(ch: &MultipathChannel, orbit_slot: u64, num_rbs: usize, symbol_duration: f64) -> Self {
        let l = ch.paths.len();
        let coeffs: Vec<Vec<Complex64>> = (0..num_rbs)
            .map(|m| channel::path_coefficients(ch, orbit_slot, m, symbol_duration))
            .collect();
        let mut q = vec![vec![Complex64::new(0.0, 0.0); l]; l];
        for c in &coeffs {
            for k in 0..l {
                for j in 0..l {
                    q[k][j] += c[k].conj() * c[j];
                }
            }
        }
        let mags = coeffs.iter().map(|c| c.iter().map(|x| x.norm()).collect()).collect();
        Self { q, mags }
    }

    /// Gain for per-path products `z_l = (w_r^H a_r,l)(a_t,l^H w_t)`.
    pub fn gain(&self, z: &[Complex64]) -> f64 {
        let mut g = 0.0;
        for k in 0..z.len() {
            g += self.q[k][k].re * z[k].norm_sqr();
            for j in k + 1..z.len() {
                g += 2.0 * (z[k].conj() * self.q[k][j] * z[j]).re;
            }
        }
        g
    }

    /// Upper bound `Σ_m (Σ_l |c_lm| u_l)²` for `|z_l| ≤ u_l`.
    fn bound(&self, u: &[f64]) -> f64 {
        self.mags
            .iter()
            .map(|c| {
                let s: f64 = c.iter().zip(u).map(|(a, b)| a * b).sum();
                s * s
            })
            .sum()
    }
}

/// Result of a beam search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamChoice {
    pub tx: Direction,
    pub rx: Direction,
    pub gain: f64,
}

fn projections(upa: &UpaConfig, dirs: &[Direction], path_dirs: &[Direction], tx_side: bool) -> Vec<Vec<Complex64>> {
    let paths: Vec<_> = path_dirs.iter().map(|d| channel::steering_vector(upa, *d)).collect();
    dirs.iter()
        .map(|d| {
            let w = channel::steering_vector(upa, *d);
            paths
                .iter()
                .map(|a| if tx_side { a.inner(&w) } else { w.inner(a) })
                .collect()
        })
        .collect()
}

/// Exhaustive argmax of the wideband beam gain over `grid⁴`; ties go to the
/// lexicographically smallest `(θ_t, φ_t, θ_r, φ_r)`.
///
/// Transmit points whose gain bound cannot reach the incumbent are skipped;
/// the bound is exact-or-above, so the result equals full enumeration.
pub fn bfs_beams(link: &Link, orbit_slot: u64, grid: &BeamGrid) -> BeamChoice {
    let (_, ch) = link.channel_at(orbit_slot);
    let gain = WidebandGain::new(&ch, orbit_slot, link.cfg.total_rbs, link.cfg.symbol_duration);
    bfs_search(&link.tx, &link.rx, &ch, &gain, grid)
}

/// Relative gain difference below which two beam tuples are tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

pub fn bfs_search(tx: &UpaConfig, rx: &UpaConfig, ch: &MultipathChannel, gain: &WidebandGain, grid: &BeamGrid) -> BeamChoice {
    let dirs = grid.directions();
    let aods: Vec<Direction> = ch.paths.iter().map(|p| p.aod).collect();
    let aoas: Vec<Direction> = ch.paths.iter().map(|p| p.aoa).collect();
    let xs = projections(tx, &dirs, &aods, true);
    let ys = projections(rx, &dirs, &aoas, false);
    let l = ch.paths.len();
    let y_max: Vec<f64> = (0..l)
        .map(|p| ys.iter().map(|y| y[p].norm()).fold(0.0, f64::max))
        .collect();
    let mut best = BeamChoice {
        tx: dirs[0],
        rx: dirs[0],
        gain: f64::NEG_INFINITY,
    };
    let mut z = vec![Complex64::new(0.0, 0.0); l];
    let mut u = vec![0.0; l];
    for (ti, x) in xs.iter().enumerate() {
        for p in 0..l {
            u[p] = x[p].norm() * y_max[p];
        }
        // Slack absorbs rounding between the bound and the exact quadratic form.
        if gain.bound(&u) * (1.0 + 1e-9) < best.gain {
            continue;
        }
        for (ri, y) in ys.iter().enumerate() {
            for p in 0..l {
                z[p] = y[p] * x[p];
            }
            let g = gain.gain(&z);
            // Gains within rounding of the incumbent count as ties, which the earlier tuple keeps.
            if best.gain == f64::NEG_INFINITY || g > best.gain * (1.0 + TIE_TOLERANCE) {
                best = BeamChoice {
                    tx: dirs[ti],
                    rx: dirs[ri],
                    gain: g,
                };
            }
        }
    }
    best
}

/// Closed-form pointing along the LOS ray in each panel's frame.
pub fn pbu_beams(cfg: &EnvConfig, orbit_slot: u64) -> (Direction, Direction) {
    let g = geometry::propagate(&cfg.orbit, orbit_slot);
    let (sp, up) = panels_at(cfg, orbit_slot);
    let a = geometry::compute_angles(&g, &sp, &up);
    (a.aod, a.aoa)
}

/// Adds groups by descending rate (lowest index on ties) until the
/// accumulated rate reaches the demand or all groups are used. Never empty.
pub fn greedy_rb(group_rates: &[f64], demand: f64) -> GroupMask {
    let mut order: Vec<usize> = (0..group_rates.len()).collect();
    order.sort_by(|&a, &b| group_rates[b].total_cmp(&group_rates[a]).then(a.cmp(&b)));
    let mut mask = GroupMask(0);
    let mut acc = 0.0;
    for g in order {
        mask = mask.with(g);
        acc += group_rates[g];
        if acc >= demand {
            break;
        }
    }
    mask
}

/// Uniformly random `count`-subset of the groups, deterministic per `(seed, slot)`.
pub fn fixed_rb(count: usize, groups: usize, seed: u64, slot: u64) -> Result<GroupMask> {
    if count == 0 || count > groups {
        return Err(Error::InvalidArgument(format!("fixed RB count {count} outside 1..={groups}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, slot));
    Ok(index::sample(&mut rng, groups, count)
        .iter()
        .fold(GroupMask(0), |m, g| m.with(g)))
}

/// UCB1 over RB groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub counts: Vec<u64>,
    /// Mean shaped reward per arm.
    pub means: Vec<f64>,
    /// Mean observed rate per arm (bits/s), used to accumulate toward demand.
    pub rate_means: Vec<f64>,
    pub rounds: u64,
    pub exploration: f64,
    /// Divides rates to bring rewards near `[0, 1]`.
    pub rate_scale: f64,
    /// Per-arm usage cost as a fraction of the mean observed arm rate.
    pub usage_cost: f64,
}

impl BanditState {
    pub fn new(arms: usize, exploration: f64, rate_scale: f64, usage_cost: f64) -> Self {
        Self {
            counts: vec![0; arms],
            means: vec![0.0; arms],
            rate_means: vec![0.0; arms],
            rounds: 0,
            exploration,
            rate_scale,
            usage_cost,
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        let ln = (self.rounds.max(1) as f64).ln();
        self.counts
            .iter()
            .zip(&self.means)
            .map(|(&n, &m)| {
                if n == 0 {
                    f64::INFINITY
                } else {
                    m + self.exploration * (2.0 * ln / n as f64).sqrt()
                }
            })
            .collect()
    }

    /// Groups in descending score order until the estimated rate covers the demand.
    pub fn select(&self, demand: f64) -> GroupMask {
        let scores = self.scores();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut mask = GroupMask(0);
        let mut acc = 0.0;
        for g in order {
            mask = mask.with(g);
            acc += self.rate_means[g];
            if acc >= demand {
                break;
            }
        }
        mask
    }

    /// Rewards every pulled arm with `rate/scale − usage_cost·mean_rate/scale`.
    pub fn update(&mut self, mask: GroupMask, group_rates: &[f64]) {
        self.rounds += 1;
        let pulled: Vec<usize> = mask.groups().filter(|&g| g < self.counts.len()).collect();
        for &g in &pulled {
            self.counts[g] += 1;
            let n = self.counts[g] as f64;
            self.rate_means[g] += (group_rates[g] - self.rate_means[g]) / n;
        }
        let observed: Vec<usize> = (0..self.counts.len()).filter(|&g| self.counts[g] > 0).collect();
        let mean_rate = observed.iter().map(|&g| self.rate_means[g]).sum::<f64>() / observed.len().max(1) as f64;
        for &g in &pulled {
            let r = (group_rates[g] - self.usage_cost * mean_rate) / self.rate_scale;
            let n = self.counts[g] as f64;
            self.means[g] += (r - self.means[g]) / n;
        }
    }
}

/// One bandit round: choose a mask for `demand`, then learn from the rates
/// observed on it.
pub fn mab_step(mut state: BanditState, observe: impl FnOnce(GroupMask) -> Vec<f64>, demand: f64) -> (GroupMask, BanditState) {
    let mask = state.select(demand);
    let rates = observe(mask);
    state.update(mask, &rates);
    (mask, state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamScheme {
    Bfs,
    Pbu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbScheme {
    Greedy,
    Fixed,
    Mab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub grid_points: usize,
    pub fixed_count: usize,
    pub mab_exploration: f64,
    pub mab_usage_cost: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            grid_points: 18,
            fixed_count: 3,
            mab_exploration: 1.0,
            mab_usage_cost: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
struct Member {
    rb: RbScheme,
    env: Environment,
    bandit: BanditState,
    last_reward_high: f64,
}

/// Baseline cells sharing one beam scheme and one seed, stepped in lockstep
/// so the beam search runs once per slot for all RB allocators.
#[derive(Debug, Clone)]
pub struct BaselineGroup {
    pub beam: BeamScheme,
    cfg: BaselineConfig,
    grid: BeamGrid,
    members: Vec<Member>,
    seed: u64,
    episode: u64,
    global_slot: u64,
}

impl BaselineGroup {
    pub fn new(env_cfg: EnvConfig, beam: BeamScheme, rbs: &[RbScheme], cfg: BaselineConfig, seed: u64) -> Result<Self> {
        if rbs.is_empty() {
            return Err(Error::InvalidArgument("baseline group needs at least one RB scheme".into()));
        }
        if cfg.fixed_count == 0 || cfg.fixed_count > env_cfg.groups {
            return Err(Error::InvalidArgument(format!("fixed RB count {} outside 1..={}", cfg.fixed_count, env_cfg.groups)));
        }
        let grid = BeamGrid::uniform(cfg.grid_points)?;
        // Rates per group normalized by an upper rate of 32 bit/s/Hz.
        let rate_scale = env_cfg.group_size() as f64 * env_cfg.noise.rb_bandwidth * 32.0;
        let members = rbs
            .iter()
            .map(|&rb| {
                let mut env = Environment::new(env_cfg.clone())?;
                env.reset_episode(mix_seed(seed, 0))?;
                Ok(Member {
                    rb,
                    env,
                    bandit: BanditState::new(env_cfg.groups, cfg.mab_exploration, rate_scale, cfg.mab_usage_cost),
                    last_reward_high: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            beam,
            cfg,
            grid,
            members,
            seed,
            episode: 0,
            global_slot: 0,
        })
    }

    pub fn schemes(&self) -> Vec<RbScheme> {
        self.members.iter().map(|m| m.rb).collect()
    }

    fn group_rates(link: &Link, rates: &[f64]) -> Vec<f64> {
        let size = link.cfg.group_size();
        (0..link.cfg.groups)
            .map(|g| rates[g * size..(g + 1) * size].iter().sum())
            .collect()
    }

    /// Advances every member by one slot; records are in member order.
    pub fn step(&mut self) -> Result<Vec<MetricRecord>> {
        if self.members[0].env.done() {
            self.episode += 1;
            for m in &mut self.members {
                m.env.reset_episode(mix_seed(self.seed, self.episode))?;
            }
        }
        let env0 = &self.members[0].env;
        let orbit_slot = env0.orbit_slot();
        let (tx, rx) = match self.beam {
            BeamScheme::Bfs => {
                let c = bfs_beams(env0.link(), orbit_slot, &self.grid);
                (c.tx, c.rx)
            }
            BeamScheme::Pbu => pbu_beams(env0.config(), orbit_slot),
        };
        let global = self.global_slot;
        let episode = self.episode;
        let mut out = Vec::with_capacity(self.members.len());
        for m in &mut self.members {
            let groups = m.env.config().groups;
            if m.env.at_cycle_boundary() {
                m.env.step_high(&HighTierAction::hold(groups))?;
            }
            m.env.set_beams(tx, rx);
            let (tx_b, rx_b) = m.env.beams();
            let slot = m.env.slot();
            let demand = draw_demand(&m.env.demand_process(), slot);
            let mask = match m.rb {
                RbScheme::Greedy => {
                    let eval = m.env.link().evaluate(orbit_slot, tx_b, rx_b);
                    greedy_rb(&Self::group_rates(m.env.link(), &eval.rates), demand)
                }
                RbScheme::Fixed => fixed_rb(self.cfg.fixed_count, groups, mix_seed(self.seed, 3 + episode), slot)?,
                RbScheme::Mab => m.bandit.select(demand),
            };
            let step = m.env.step_low(&LowTierAction {
                beam_delta: (0, 0),
                mask,
            })?;
            if m.rb == RbScheme::Mab {
                let rates = Self::group_rates(m.env.link(), &step.info.rb_rates);
                m.bandit.update(mask, &rates);
            }
            if let Some(c) = &step.cycle_end {
                m.last_reward_high = c.reward_high;
            }
            out.push(MetricRecord::from_step(global, episode, &step, m.last_reward_high));
        }
        self.global_slot += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_hand_example() {
        assert_eq!(greedy_rb(&[5.0, 3.0, 1.0], 7.0), GroupMask(0b011));
        assert_eq!(greedy_rb(&[5.0, 3.0, 1.0], 0.0), GroupMask(0b001));
        assert_eq!(greedy_rb(&[5.0, 3.0, 1.0], 100.0), GroupMask(0b111));
    }

    #[test]
    fn fixed_full_count_is_full_mask() {
        assert_eq!(fixed_rb(5, 5, 9, 4).unwrap(), GroupMask::full(5));
        assert!(fixed_rb(0, 5, 9, 4).is_err());
        assert_eq!(fixed_rb(2, 5, 1, 7).unwrap(), fixed_rb(2, 5, 1, 7).unwrap());
    }

    #[test]
    fn unpulled_arm_goes_first() {
        let mut s = BanditState::new(3, 1.0, 1.0, 0.0);
        s.update(GroupMask(0b011), &[1.0, 1.0, 0.0]);
        assert_eq!(s.select(0.0), GroupMask(0b100));
    }

    #[test]
    fn grid_covers_both_ends() {
        let g = BeamGrid::default();
        assert_eq!(g.points.len(), 18);
        assert_eq!(g.points[0], 0.0);
        assert!((g.points[17] - std::f64::consts::PI).abs() < 1e-15);
    }
}
