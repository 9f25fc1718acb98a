//! Finite MDPs, their exact solvers, and the coupled two-tier instance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::mix_seed;
use crate::error::{Error, Result};

/// Stochastic policy table `π[s][a]`.
pub type Policy = Vec<Vec<f64>>;

pub fn deterministic(actions: &[usize], n_actions: usize) -> Policy {
    actions
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; n_actions];
            row[a] = 1.0;
            row
        })
        .collect()
}

pub fn uniform_policy(n_states: usize, n_actions: usize) -> Policy {
    vec![vec![1.0 / n_actions as f64; n_actions]; n_states]
}

/// Per-state mixture `(1−α)·base + α·other`.
pub fn mix(base: &Policy, other: &Policy, alpha: f64) -> Policy {
    base.iter()
        .zip(other)
        .map(|(b, o)| b.iter().zip(o).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect())
        .collect()
}

/// Random full-support policy drawn row-wise from normalized uniforms.
pub fn random_policy(rng: &mut impl Rng, n_states: usize, n_actions: usize) -> Policy {
    (0..n_states)
        .map(|_| {
            let w: Vec<f64> = (0..n_actions).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect()
}

/// Index of a deterministic policy in base `n_actions`.
pub fn policy_index(actions: &[usize], n_actions: usize) -> u64 {
    actions.iter().rev().fold(0u64, |acc, &a| acc * n_actions as u64 + a as u64)
}

pub fn policy_from_index(mut index: u64, n_states: usize, n_actions: usize) -> Vec<usize> {
    (0..n_states)
        .map(|_| {
            let a = (index % n_actions as u64) as usize;
            index /= n_actions as u64;
            a
        })
        .collect()
}

/// `max‖u − v‖_∞`.
pub fn sup_norm(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Discounted MDP with expected rewards `r[s][a]` and kernel `p[s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub reward: Vec<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

impl FiniteMdp {
    pub fn n_states(&self) -> usize {
        self.reward.len()
    }

    pub fn n_actions(&self) -> usize {
        self.reward.first().map_or(0, Vec::len)
    }

    pub fn q_values(&self, v: &[f64]) -> Vec<Vec<f64>> {
        self.reward
            .iter()
            .zip(&self.transition)
            .map(|(rs, ps)| {
                rs.iter()
                    .zip(ps)
                    .map(|(r, p)| r + self.gamma * p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    /// Optimal Bellman operator `(T v)(s) = max_a Q(s, a)`.
    pub fn bellman_optimal(&self, v: &[f64]) -> Vec<f64> {
        self.q_values(v)
            .iter()
            .map(|q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Policy Bellman operator `(T^π v)(s)`.
    pub fn bellman_policy(&self, v: &[f64], policy: &Policy) -> Vec<f64> {
        self.q_values(v)
            .iter()
            .zip(policy)
            .map(|(q, pi)| q.iter().zip(pi).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Greedy actions; ties go to the lowest index.
    pub fn greedy(&self, v: &[f64]) -> Vec<usize> {
        self.q_values(v).iter().map(|q| argmax(q)).collect()
    }

    /// Greedy actions that keep `current[s]` unless another action is better
    /// by more than `tol`.
    pub fn greedy_sticky(&self, v: &[f64], current: &[usize], tol: f64) -> Vec<usize> {
        self.q_values(v)
            .iter()
            .zip(current)
            .map(|(q, &c)| {
                let best = argmax(q);
                if q[best] > q[c] + tol {
                    best
                } else {
                    c
                }
            })
            .collect()
    }

    /// Expected reward vector and kernel of the chain induced by `policy`.
    pub fn induced(&self, policy: &Policy) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n_states();
        let mut r = DVector::zeros(n);
        let mut p = DMatrix::zeros(n, n);
        for s in 0..n {
            for (a, &w) in policy[s].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                r[s] += w * self.reward[s][a];
                for (t, &q) in self.transition[s][a].iter().enumerate() {
                    p[(s, t)] += w * q;
                }
            }
        }
        (r, p)
    }

    /// Exact `V^π = (I − γ P_π)⁻¹ r_π`.
    pub fn evaluate(&self, policy: &Policy) -> Vec<f64> {
        let (r, p) = self.induced(policy);
        solve_discounted(&p, self.gamma, &r).iter().copied().collect()
    }

    /// Unnormalized discounted visitation `(I − γ P_πᵀ)⁻¹ d0`, summing to `1/(1−γ)`.
    pub fn visitation(&self, policy: &Policy, d0: &[f64]) -> Vec<f64> {
        let (_, p) = self.induced(policy);
        solve_discounted(&p.transpose(), self.gamma, &DVector::from_column_slice(d0))
            .iter()
            .copied()
            .collect()
    }

    /// Optimal values: value iteration to a 1e-10 residual, then policy
    /// iteration on the greedy policy, which lands on the exact fixed point.
    pub fn optimal_values(&self) -> Vec<f64> {
        let n = self.n_states();
        let mut v = vec![0.0; n];
        for _ in 0..100_000 {
            let next = self.bellman_optimal(&v);
            let diff = sup_norm(&next, &v);
            v = next;
            if diff < 1e-10 {
                break;
            }
        }
        let mut policy = self.greedy(&v);
        loop {
            v = self.evaluate(&deterministic(&policy, self.n_actions()));
            let next = self.greedy_sticky(&v, &policy, 1e-13);
            if next == policy {
                return v;
            }
            policy = next;
        }
    }
}

fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in q.iter().enumerate() {
        if *x > q[best] {
            best = i;
        }
    }
    best
}

fn solve_discounted(p: &DMatrix<f64>, gamma: f64, rhs: &DVector<f64>) -> DVector<f64> {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - p * gamma;
    // I − γP is strictly diagonally dominant for γ < 1, so LU never fails.
    a.lu().solve(rhs).expect("I − γP is nonsingular for γ < 1")
}

/// Two-tier coupled MDP on enumerated state and action sets.
///
/// One high-tier step spans `T` low-tier steps. Given the low policy, the
/// high step from `s_H` under `a_H` starts a low trajectory at `entry[s_H]`,
/// runs it for `T` steps through `g(·, ·, a_H)`, earns
/// `(1−κ)·u(s_H, a_H) + κ·mean_p q(s_L^p, a_L^p)` and moves to
/// `h[s_H][a_H][end_bit(s_L^T)]`; with probability `slip` the next high
/// state is instead uniform. Given the high policy, the low tier at `s_L`
/// faces the high action `a_H ∼ π_H(·|context[s_L])`, earns
/// `r_L(s_L, a_L, a_H)` and moves to `g(s_L, a_L, a_H)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularTTMDP {
    pub n_high_states: usize,
    pub n_high_actions: usize,
    pub n_low_states: usize,
    pub n_low_actions: usize,
    pub cycle_len: usize,
    pub gamma_high: f64,
    pub gamma_low: f64,
    /// `u[s_H][a_H]`.
    pub high_reward: Vec<Vec<f64>>,
    /// `q[s_L][a_L]`, the low trajectory's contribution to `R_H`.
    pub coupling_reward: Vec<Vec<f64>>,
    /// `κ ∈ [0, 1]`.
    pub coupling_weight: f64,
    /// `r_L[s_L][a_L][a_H]`.
    pub low_reward: Vec<Vec<Vec<f64>>>,
    /// `g[s_L][a_L][a_H]`.
    pub low_next: Vec<Vec<Vec<usize>>>,
    /// `h[s_H][a_H][bit]`.
    pub high_next: Vec<Vec<[usize; 2]>>,
    pub entry: Vec<usize>,
    pub context: Vec<usize>,
    pub end_bit: Vec<usize>,
    pub slip: f64,
}

/// Table sizes for randomly generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceShape {
    pub high_states: usize,
    pub high_actions: usize,
    pub low_states: usize,
    pub low_actions: usize,
    pub cycle_len: usize,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            high_states: 4,
            high_actions: 3,
            low_states: 4,
            low_actions: 3,
            cycle_len: 3,
        }
    }
}

/// Seed of the default instance.
pub const DEFAULT_INSTANCE_SEED: u64 = 0;

impl TabularTTMDP {
    /// The default 4-state/3-action instance, `T = 3`, `γ = 0.8` on both tiers.
    pub fn default_instance() -> Self {
        Self::random(DEFAULT_INSTANCE_SEED, InstanceShape::default(), 0.8, 0.3)
    }

    /// Rewards uniform on `[0, 1]`, maps uniform over their ranges.
    pub fn random(seed: u64, shape: InstanceShape, gamma: f64, coupling_weight: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x7ab));
        let InstanceShape {
            high_states: sh,
            high_actions: ah,
            low_states: sl,
            low_actions: al,
            cycle_len,
        } = shape;
        let table = |rng: &mut ChaCha8Rng, n: usize, m: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect()
        };
        let high_reward = table(&mut rng, sh, ah);
        let coupling_reward = table(&mut rng, sl, al);
        let low_reward = (0..sl).map(|_| table(&mut rng, al, ah)).collect();
        let low_next = (0..sl)
            .map(|_| {
                (0..al)
                    .map(|_| (0..ah).map(|_| rng.random_range(0..sl)).collect())
                    .collect()
            })
            .collect();
        let high_next = (0..sh)
            .map(|_| {
                (0..ah)
                    .map(|_| [rng.random_range(0..sh), rng.random_range(0..sh)])
                    .collect()
            })
            .collect();
        let entry = (0..sh).map(|_| rng.random_range(0..sl)).collect();
        let context = (0..sl).map(|_| rng.random_range(0..sh)).collect();
        let end_bit = (0..sl).map(|_| rng.random_range(0..2)).collect();
        Self {
            n_high_states: sh,
            n_high_actions: ah,
            n_low_states: sl,
            n_low_actions: al,
            cycle_len,
            gamma_high: gamma,
            gamma_low: gamma,
            high_reward,
            coupling_reward,
            coupling_weight,
            low_reward,
            low_next,
            high_next,
            entry,
            context,
            end_bit,
            slip: 0.0,
        }
    }

    /// Same tables with the coupling removed in both directions: `κ = 0`, and
    /// the low tier's rewards and transitions use the `a_H = 0` slice for
    /// every high action.
    pub fn decoupled(mut self) -> Self {
        self.coupling_weight = 0.0;
        for s in 0..self.n_low_states {
            for a in 0..self.n_low_actions {
                let r = self.low_reward[s][a][0];
                let g = self.low_next[s][a][0];
                for ah in 0..self.n_high_actions {
                    self.low_reward[s][a][ah] = r;
                    self.low_next[s][a][ah] = g;
                }
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let (sh, ah, sl, al) = (self.n_high_states, self.n_high_actions, self.n_low_states, self.n_low_actions);
        if sh == 0 || ah == 0 || sl == 0 || al == 0 || self.cycle_len == 0 {
            return bad("empty state/action set or T = 0".into());
        }
        if sh * ah + sl * al > 10_000 {
            return bad("|S|·|A| exceeds 10⁴".into());
        }
        for g in [self.gamma_high, self.gamma_low] {
            if !(0.0..1.0).contains(&g) {
                return bad(format!("discount {g} must be in [0, 1)"));
            }
        }
        if !(0.0..=1.0).contains(&self.coupling_weight) || !(0.0..=1.0).contains(&self.slip) {
            return bad("κ and slip must be in [0, 1]".into());
        }
        let shapes_ok = self.high_reward.len() == sh
            && self.high_reward.iter().all(|r| r.len() == ah)
            && self.coupling_reward.len() == sl
            && self.coupling_reward.iter().all(|r| r.len() == al)
            && self.low_reward.len() == sl
            && self.low_reward.iter().all(|r| r.len() == al && r.iter().all(|x| x.len() == ah))
            && self.low_next.len() == sl
            && self.low_next.iter().all(|r| r.len() == al && r.iter().all(|x| x.len() == ah && x.iter().all(|&s| s < sl)))
            && self.high_next.len() == sh
            && self.high_next.iter().all(|r| r.len() == ah && r.iter().all(|x| x.iter().all(|&s| s < sh)))
            && self.entry.len() == sh
            && self.entry.iter().all(|&s| s < sl)
            && self.context.len() == sl
            && self.context.iter().all(|&s| s < sh)
            && self.end_bit.len() == sl
            && self.end_bit.iter().all(|&b| b < 2);
        if !shapes_ok {
            return bad("table shapes or map ranges inconsistent with the declared sets".into());
        }
        let finite = self
            .high_reward
            .iter()
            .chain(&self.coupling_reward)
            .flatten()
            .chain(self.low_reward.iter().flatten().flatten())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("reward table".into()));
        }
        Ok(())
    }

    /// `(R_H^max, R_L^max)`.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let max_abs = |it: &mut dyn Iterator<Item = &f64>| it.map(|x| x.abs()).fold(0.0, f64::max);
        let u = max_abs(&mut self.high_reward.iter().flatten());
        let q = max_abs(&mut self.coupling_reward.iter().flatten());
        let k = self.coupling_weight;
        let rl = max_abs(&mut self.low_reward.iter().flatten().flatten());
        ((1.0 - k) * u + k * q, rl)
    }

    /// `(|S_H|·|A_H|, |S_L|·|A_L|)`.
    pub fn state_action_counts(&self) -> (usize, usize) {
        (self.n_high_states * self.n_high_actions, self.n_low_states * self.n_low_actions)
    }

    /// Expected coupling reward and end-bit distribution of one cycle.
    fn cycle_outcome(&self, s_h: usize, a_h: usize, pi_l: &Policy) -> (f64, [f64; 2]) {
        let mut dist = vec![0.0; self.n_low_states];
        dist[self.entry[s_h]] = 1.0;
        let mut q = 0.0;
        for _ in 0..self.cycle_len {
            let mut next = vec![0.0; self.n_low_states];
            for (s, &w) in dist.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (a, &pa) in pi_l[s].iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    q += w * pa * self.coupling_reward[s][a];
                    next[self.low_next[s][a][a_h]] += w * pa;
                }
            }
            dist = next;
        }
        let mut bits = [0.0; 2];
        for (s, w) in dist.iter().enumerate() {
            bits[self.end_bit[s]] += w;
        }
        (q / self.cycle_len as f64, bits)
    }

    /// High-tier reward and next-state distribution for one realized
    /// coupling average and end bit.
    pub fn high_outcome(&self, s_h: usize, a_h: usize, coupling_mean: f64, bit: usize) -> (f64, Vec<f64>) {
        let k = self.coupling_weight;
        let r = (1.0 - k) * self.high_reward[s_h][a_h] + k * coupling_mean;
        let n = self.n_high_states;
        let mut p = vec![self.slip / n as f64; n];
        p[self.high_next[s_h][a_h][bit]] += 1.0 - self.slip;
        (r, p)
    }

    /// The high tier's MDP with the low tier following `pi_l`.
    pub fn high_mdp(&self, pi_l: &Policy) -> FiniteMdp {
        let mut reward = vec![vec![0.0; self.n_high_actions]; self.n_high_states];
        let mut transition = vec![vec![vec![0.0; self.n_high_states]; self.n_high_actions]; self.n_high_states];
        for s in 0..self.n_high_states {
            for a in 0..self.n_high_actions {
                let (q, bits) = self.cycle_outcome(s, a, pi_l);
                for (bit, w) in bits.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let (r, p) = self.high_outcome(s, a, q, bit);
                    reward[s][a] += w * r;
                    for (t, x) in p.iter().enumerate() {
                        transition[s][a][t] += w * x;
                    }
                }
            }
        }
        FiniteMdp {
            reward,
            transition,
            gamma: self.gamma_high,
        }
    }

    /// The low tier's MDP with the high tier following `pi_h`.
    pub fn low_mdp(&self, pi_h: &Policy) -> FiniteMdp {
        let mut reward = vec![vec![0.0; self.n_low_actions]; self.n_low_states];
        let mut transition = vec![vec![vec![0.0; self.n_low_states]; self.n_low_actions]; self.n_low_states];
        for s in 0..self.n_low_states {
            let ctx = &pi_h[self.context[s]];
            for a in 0..self.n_low_actions {
                for (ah, &w) in ctx.iter().enumerate() {
                    reward[s][a] += w * self.low_reward[s][a][ah];
                    transition[s][a][self.low_next[s][a][ah]] += w;
                }
            }
        }
        FiniteMdp {
            reward,
            transition,
            gamma: self.gamma_low,
        }
    }

    /// Optimal high-tier values with the low tier fixed at `pi_l`.
    pub fn high_oracle(&self, pi_l: &Policy) -> Vec<f64> {
        value_iteration_oracle(&self.high_mdp(pi_l))
    }

    /// Optimal low-tier values with the high tier fixed at `pi_h`.
    pub fn low_oracle(&self, pi_h: &Policy) -> Vec<f64> {
        value_iteration_oracle(&self.low_mdp(pi_h))
    }

    /// Deterministic best response of the high tier to `pi_l`.
    pub fn high_best_response(&self, pi_l: &Policy) -> Vec<usize> {
        let m = self.high_mdp(pi_l);
        m.greedy(&value_iteration_oracle(&m))
    }

    /// Deterministic best response of the low tier to `pi_h`.
    pub fn low_best_response(&self, pi_h: &Policy) -> Vec<usize> {
        let m = self.low_mdp(pi_h);
        m.greedy(&value_iteration_oracle(&m))
    }

    /// Every deterministic pair in which each tier's policy is the
    /// (lowest-index greedy) best response to the other's.
    pub fn equilibria(&self) -> Result<Vec<Equilibrium>> {
        let (sh, ah, sl, al) = (self.n_high_states, self.n_high_actions, self.n_low_states, self.n_low_actions);
        let n_high = (ah as f64).powi(sh as i32);
        let n_low = (al as f64).powi(sl as i32);
        if n_high + n_low > 1e5 {
            return Err(Error::InvalidArgument("too many deterministic policies to enumerate".into()));
        }
        let mut found = Vec::new();
        for ih in 0..n_high as u64 {
            let pi_h = policy_from_index(ih, sh, ah);
            let low = self.low_best_response(&deterministic(&pi_h, ah));
            let pi_l = deterministic(&low, al);
            if self.high_best_response(&pi_l) == pi_h {
                let x = self.high_oracle(&pi_l);
                let y = self.low_oracle(&deterministic(&pi_h, ah));
                found.push(Equilibrium {
                    policy_high: pi_h,
                    policy_low: low,
                    x_star: x,
                    y_star: y,
                });
            }
        }
        Ok(found)
    }

    /// The unique equilibrium, or an error when there is none or several.
    pub fn unique_equilibrium(&self) -> Result<Equilibrium> {
        let mut eq = self.equilibria()?;
        if eq.len() != 1 {
            return Err(Error::InvalidArgument(format!("instance has {} equilibria, expected 1", eq.len())));
        }
        Ok(eq.remove(0))
    }
}

/// A mutually best-responding deterministic pair with its optimal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub policy_high: Vec<usize>,
    pub policy_low: Vec<usize>,
    /// `x*`: optimal high values against `policy_low`.
    pub x_star: Vec<f64>,
    /// `y*`: optimal low values against `policy_high`.
    pub y_star: Vec<f64>,
}

/// Fixed point of the optimal Bellman operator.
pub fn value_iteration_oracle(mdp: &FiniteMdp) -> Vec<f64> {
    mdp.optimal_values()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> FiniteMdp {
        // 0 → 1 → 2 → 2 with rewards 1, 2, 3 and one action.
        let p = |t: usize| {
            let mut v = vec![0.0; 3];
            v[t] = 1.0;
            vec![v]
        };
        FiniteMdp {
            reward: vec![vec![1.0], vec![2.0], vec![3.0]],
            transition: vec![p(1), p(2), p(2)],
            gamma: 0.5,
        }
    }

    #[test]
    fn single_state_geometric_series() {
        let m = FiniteMdp {
            reward: vec![vec![2.0]],
            transition: vec![vec![vec![1.0]]],
            gamma: 0.9,
        };
        assert!((value_iteration_oracle(&m)[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn chain_matches_hand_solution() {
        // V2 = 3/(1−½) = 6, V1 = 2 + 3 = 5, V0 = 1 + 2.5 = 3.5.
        let v = value_iteration_oracle(&chain());
        for (a, b) in v.iter().zip([3.5, 5.0, 6.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn policy_index_round_trips() {
        let p = vec![2, 0, 1, 2];
        assert_eq!(policy_from_index(policy_index(&p, 3), 4, 3), p);
    }

    #[test]
    fn visitation_sums_to_horizon() {
        let m = TabularTTMDP::default_instance().high_mdp(&uniform_policy(4, 3));
        let d = m.visitation(&uniform_policy(4, 3), &[0.25; 4]);
        assert!((d.iter().sum::<f64>() - 5.0).abs() < 1e-10);
    }

    #[test]
    fn induced_kernels_are_stochastic() {
        let mdp = TabularTTMDP::default_instance();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pl = random_policy(&mut rng, 4, 3);
        let ph = random_policy(&mut rng, 4, 3);
        for m in [mdp.high_mdp(&pl), mdp.low_mdp(&ph)] {
            for row in m.transition.iter().flatten() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
