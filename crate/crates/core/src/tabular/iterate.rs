//! Coupled two-time-scale value iteration, its error bounds and the
//! residual diagnostics.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mdp::{deterministic, policy_index, sup_norm, uniform_policy, Equilibrium, FiniteMdp, TabularTTMDP};
use crate::environment::mix_seed;
use crate::error::{Error, Result};

/// Step-size schedules `a(n)` (high tier) and `b(n)` (low tier).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSizes {
    /// `a(n) = (n+1)^{−a_exp}`, `b(n) = (n+1)^{−b_exp}`.
    Polynomial { a_exp: f64, b_exp: f64 },
    /// `a(n) = 1/(1 + n ln n)`, `b(n) = 1/n`, indexed from `n = 1`.
    Logarithmic,
    Constant { a: f64, b: f64 },
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes::Polynomial { a_exp: 0.6, b_exp: 0.8 }
    }
}

impl StepSizes {
    /// `(a(n), b(n))` for the zero-based step `n`.
    pub fn at(&self, n: u64) -> (f64, f64) {
        match *self {
            StepSizes::Polynomial { a_exp, b_exp } => {
                let m = (n + 1) as f64;
                (m.powf(-a_exp), m.powf(-b_exp))
            }
            StepSizes::Logarithmic => {
                let m = (n + 1) as f64;
                (1.0 / (1.0 + m * m.ln()), 1.0 / m)
            }
            StepSizes::Constant { a, b } => (a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateConfig {
    pub steps: u64,
    /// Rollout depth of the high-tier target.
    pub n_bar: usize,
    /// Half-width of the uniform reward noise in the empirical operators.
    pub noise: f64,
    pub step_sizes: StepSizes,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for IterateConfig {
    fn default() -> Self {
        Self {
            steps: 100_000,
            n_bar: 3,
            noise: 0.03,
            step_sizes: StepSizes::default(),
            checkpoint_every: 1000,
            seed: 0,
        }
    }
}

/// Iterates and greedy policies at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub policy_high: Vec<usize>,
    pub policy_low: Vec<usize>,
}

/// Per-step residuals (averaged over states) and step sizes, plus
/// periodic checkpoints of the value tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub steps: u64,
    pub beta_high: Vec<f64>,
    pub beta_low: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub policy_high: Vec<usize>,
    pub policy_low: Vec<usize>,
}

/// Memoized tier MDPs and evaluations keyed by deterministic policy index.
struct Cache<'a> {
    mdp: &'a TabularTTMDP,
    high: HashMap<u64, FiniteMdp>,
    low: HashMap<u64, FiniteMdp>,
    best_high: HashMap<u64, Vec<usize>>,
    low_values: HashMap<(u64, u64), Vec<f64>>,
}

impl<'a> Cache<'a> {
    fn new(mdp: &'a TabularTTMDP) -> Self {
        Self {
            mdp,
            high: HashMap::new(),
            low: HashMap::new(),
            best_high: HashMap::new(),
            low_values: HashMap::new(),
        }
    }

    fn high(&mut self, pi_l: &[usize]) -> &FiniteMdp {
        let m = self.mdp;
        self.high
            .entry(policy_index(pi_l, m.n_low_actions))
            .or_insert_with(|| m.high_mdp(&deterministic(pi_l, m.n_low_actions)))
    }

    fn low(&mut self, pi_h: &[usize]) -> &FiniteMdp {
        let m = self.mdp;
        self.low
            .entry(policy_index(pi_h, m.n_high_actions))
            .or_insert_with(|| m.low_mdp(&deterministic(pi_h, m.n_high_actions)))
    }

    /// `f(π_L)`: the exact best-response high policy.
    fn best_high(&mut self, pi_l: &[usize]) -> Vec<usize> {
        let key = policy_index(pi_l, self.mdp.n_low_actions);
        if let Some(p) = self.best_high.get(&key) {
            return p.clone();
        }
        let p = self.mdp.high_best_response(&deterministic(pi_l, self.mdp.n_low_actions));
        self.best_high.insert(key, p.clone());
        p
    }

    /// `V^{π_L}(·; π_H)`.
    fn low_value(&mut self, pi_l: &[usize], pi_h: &[usize]) -> Vec<f64> {
        let key = (
            policy_index(pi_l, self.mdp.n_low_actions),
            policy_index(pi_h, self.mdp.n_high_actions),
        );
        if let Some(v) = self.low_values.get(&key) {
            return v.clone();
        }
        let al = self.mdp.n_low_actions;
        let v = self.low(pi_h).evaluate(&deterministic(pi_l, al));
        self.low_values.insert(key, v.clone());
        v
    }
}

/// Runs the coupled updates
///
/// `x(n+1) = (1−a(n))·x(n) + a(n)·(T̂_H x(n) + β_H)` and
/// `y(n+1) = (1−b(n))·y(n) + b(n)·(T̂_L y(n) + β_L)`
///
/// as sweeps over all states. The low tier moves first: `π_L^{n+1}` is
/// greedy in `y(n)` against `π_H^n`, then `π_H^{n+1}` is greedy in `x(n)`
/// against `π_L^{n+1}`. `T̂_H` is the optimal one-step operator of the high
/// MDP induced by `π_L^{n+1}`; `T̂_L` evaluates `π_L^{n+1}` one step in the
/// low MDP induced by `π_H^{n+1}`. Both add uniform reward noise.
///
/// `β_H` is the gap between the `n̄`-step rollout target
/// `T_H^{n̄} x(n)` and the one-step target, plus the noise. `β_L` is
/// `V^{π_L}(·; f(π_L)) − V^{π_L}(·; π_H^{n+1})` with `f(π_L)` the exact
/// best-response high policy, plus the noise. Both deterministic parts vanish
/// at the equilibrium.
pub fn two_timescale_iterate(mdp: &TabularTTMDP, cfg: &IterateConfig) -> Result<IterateTrace> {
    mdp.validate()?;
    if cfg.steps == 0 || cfg.n_bar == 0 || cfg.checkpoint_every == 0 {
        return Err(Error::InvalidArgument("steps, n̄ and checkpoint interval must be ≥ 1".into()));
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be ≥ 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x17e));
    let (sh, sl) = (mdp.n_high_states, mdp.n_low_states);
    let mut cache = Cache::new(mdp);
    let mut x = vec![0.0; sh];
    let mut y = vec![0.0; sl];
    // π_H^0 is uniform; every later policy is deterministic.
    let first_low = mdp.low_mdp(&uniform_policy(sh, mdp.n_high_actions)).greedy(&y);
    let mut pi_l = first_low;
    let mut pi_h = cache.high(&pi_l).greedy(&x);
    let n = cfg.steps as usize;
    let mut trace = IterateTrace {
        steps: cfg.steps,
        beta_high: Vec::with_capacity(n),
        beta_low: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        checkpoints: Vec::new(),
        x: vec![],
        y: vec![],
        policy_high: vec![],
        policy_low: vec![],
    };
    for step in 0..cfg.steps {
        if step > 0 {
            pi_l = cache.low(&pi_h).greedy(&y);
            pi_h = cache.high(&pi_l).greedy(&x);
        }
        let (a, b) = cfg.step_sizes.at(step);

        let high = cache.high(&pi_l);
        let one_step = high.bellman_optimal(&x);
        let mut rollout = one_step.clone();
        for _ in 1..cfg.n_bar {
            rollout = high.bellman_optimal(&rollout);
        }
        let mut beta_h = 0.0;
        for s in 0..sh {
            let beta = rollout[s] - one_step[s] + cfg.noise * rng.random_range(-1.0..=1.0);
            x[s] = (1.0 - a) * x[s] + a * (one_step[s] + beta);
            beta_h += beta;
        }

        let hat = cache.best_high(&pi_l);
        let gap: Vec<f64> = if hat == pi_h {
            vec![0.0; sl]
        } else {
            let v_hat = cache.low_value(&pi_l, &hat);
            let v_cur = cache.low_value(&pi_l, &pi_h);
            v_hat.iter().zip(&v_cur).map(|(p, q)| p - q).collect()
        };
        let low = cache.low(&pi_h);
        let target = low.bellman_policy(&y, &deterministic(&pi_l, mdp.n_low_actions));
        let mut beta_l = 0.0;
        for s in 0..sl {
            let beta = gap[s] + cfg.noise * rng.random_range(-1.0..=1.0);
            y[s] = (1.0 - b) * y[s] + b * (target[s] + beta);
            beta_l += beta;
        }

        trace.beta_high.push(beta_h / sh as f64);
        trace.beta_low.push(beta_l / sl as f64);
        trace.a.push(a);
        trace.b.push(b);
        if (step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.steps {
            let next_low = cache.low(&pi_h).greedy(&y);
            let ph = cache.high(&next_low).greedy(&x);
            let pl = cache.low(&ph).greedy(&y);
            trace.checkpoints.push(Checkpoint {
                n: step + 1,
                x: x.clone(),
                y: y.clone(),
                policy_high: ph,
                policy_low: pl,
            });
        }
    }
    let last = trace.checkpoints.last().expect("at least one checkpoint").clone();
    trace.x = last.x;
    trace.y = last.y;
    trace.policy_high = last.policy_high;
    trace.policy_low = last.policy_low;
    Ok(trace)
}

/// `(4R/(1−γ))·(1/(n(1−γ)) + 2·sqrt((2/n)·ln(2|S||A|/δ)))`.
pub fn theorem2_bound(r_max: f64, gamma: f64, state_actions: usize, delta: f64, n: f64) -> f64 {
    let c = 4.0 * r_max / (1.0 - gamma);
    let log = (2.0 * state_actions as f64 / delta).ln();
    c * (1.0 / (n * (1.0 - gamma)) + 2.0 * (2.0 / n * log).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub n: u64,
    pub delta: f64,
    pub bound_high: f64,
    pub bound_low: f64,
    pub error_high: f64,
    pub error_low: f64,
    pub pass_high: bool,
    pub pass_low: bool,
}

impl Theorem2Report {
    pub fn pass(&self) -> bool {
        self.pass_high && self.pass_low
    }
}

/// Compares `‖x* − x(n)‖_∞` and `‖y* − y(n)‖_∞` with each tier's bound.
pub fn check_theorem2(trace: &IterateTrace, mdp: &TabularTTMDP, oracle: &Equilibrium, delta: f64) -> Theorem2Report {
    let (rh, rl) = mdp.reward_bounds();
    let (sah, sal) = mdp.state_action_counts();
    let n = trace.steps as f64;
    let bound_high = theorem2_bound(rh, mdp.gamma_high, sah, delta, n);
    let bound_low = theorem2_bound(rl, mdp.gamma_low, sal, delta, n);
    let error_high = sup_norm(&trace.x, &oracle.x_star);
    let error_low = sup_norm(&trace.y, &oracle.y_star);
    Theorem2Report {
        n: trace.steps,
        delta,
        bound_high,
        bound_low,
        error_high,
        error_low,
        pass_high: error_high <= bound_high,
        pass_low: error_low <= bound_low,
    }
}

/// Per-tier parameters of the convergence-time bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierBoundParams {
    pub r_max: f64,
    pub gamma: f64,
    pub state_actions: usize,
}

/// Smallest `n` at which the error bound of one tier equals `ε`.
///
/// With `C = 4R/(1−γ)`, `L = ln(2|S||A|/δ)` and `u = n^{−1/2}` the bound is
/// the quadratic `(C/(1−γ))·u² + 2C·sqrt(2L)·u`, so the inversion is exact:
/// `u = (−q + sqrt(q² + 4pε))/(2p)` with `p = C/(1−γ)`, `q = 2C·sqrt(2L)`.
/// For small `ε` this is `n ≈ 32·R²·L/(ε²(1−γ)²)`.
pub fn tier_time(epsilon: f64, delta: f64, tier: TierBoundParams) -> f64 {
    let c = 4.0 * tier.r_max / (1.0 - tier.gamma);
    let log = (2.0 * tier.state_actions as f64 / delta).ln();
    let p = c / (1.0 - tier.gamma);
    let q = 2.0 * c * (2.0 * log).sqrt();
    let u = (-q + (q * q + 4.0 * p * epsilon).sqrt()) / (2.0 * p);
    1.0 / (u * u)
}

/// Steps after which both tiers' bounds are at most `ε`.
pub fn corollary1_time(epsilon: f64, delta: f64, high: TierBoundParams, low: TierBoundParams) -> Result<f64> {
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument("need ε > 0 and δ in (0, 1)".into()));
    }
    Ok(tier_time(epsilon, delta, high).max(tier_time(epsilon, delta, low)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Mean of the residual over the trailing tenth of the trace.
    pub tail_mean: f64,
    pub tail_std: f64,
    /// `max_m |S_N − S_m|` over the final 1% of `S_m = Σ_{k<m} step(k)·β(k)`.
    pub tail_increment: f64,
    pub zero_mean: bool,
    pub cauchy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub high: ResidualStats,
    pub low: ResidualStats,
}

impl MartingaleReport {
    pub fn pass(&self) -> bool {
        self.high.zero_mean && self.high.cauchy && self.low.zero_mean && self.low.cauchy
    }
}

fn residual_stats(beta: &[f64], step: &[f64]) -> ResidualStats {
    let n = beta.len();
    let tail = &beta[n - n / 10..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let std = (tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / tail.len() as f64).sqrt();
    let window = (n / 100).max(1);
    let mut partial = 0.0;
    let mut sums = Vec::with_capacity(n + 1);
    sums.push(0.0);
    for (x, s) in beta.iter().zip(step) {
        partial += s * x;
        sums.push(partial);
    }
    let end = sums[n];
    let tail_increment = sums[n - window..].iter().map(|s| (end - s).abs()).fold(0.0, f64::max);
    ResidualStats {
        tail_mean: mean,
        tail_std: std,
        tail_increment,
        zero_mean: mean.abs() <= 0.05 * std + 1e-12,
        cauchy: tail_increment < 1e-3,
    }
}

/// Zero-mean and summability diagnostics of `β_H`, `β_L`.
pub fn check_martingale(trace: &IterateTrace) -> Result<MartingaleReport> {
    let n = trace.beta_high.len();
    if n < 1000 || trace.beta_low.len() != n || trace.a.len() != n || trace.b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "martingale check needs ≥ 1000 aligned steps, got {n}"
        )));
    }
    Ok(MartingaleReport {
        high: residual_stats(&trace.beta_high, &trace.a),
        low: residual_stats(&trace.beta_low, &trace.b),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConvergence {
    /// First checkpoint step from which every checkpoint's greedy policies
    /// equal the equilibrium's; `None` when the final one differs.
    pub n0: Option<u64>,
    pub checkpoints: usize,
}

pub fn policy_convergence(trace: &IterateTrace, oracle: &Equilibrium) -> PolicyConvergence {
    let mut n0 = None;
    for c in trace.checkpoints.iter().rev() {
        if c.policy_high == oracle.policy_high && c.policy_low == oracle.policy_low {
            n0 = Some(c.n);
        } else {
            break;
        }
    }
    PolicyConvergence {
        n0,
        checkpoints: trace.checkpoints.len(),
    }
}
