//! Exact evaluation of the two policy-improvement bounds under α-coupled
//! policy changes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mdp::{deterministic, mix, Policy, TabularTTMDP};
use crate::error::{Error, Result};

/// One side-by-side comparison `lhs ≥ surrogate − penalty`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `ρ(new) − ρ(old)`.
    pub improvement: f64,
    /// `L`: expected new-policy advantage under the old discounted visitation.
    pub surrogate: f64,
    pub epsilon: f64,
    pub penalty: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(improvement: f64, surrogate: f64, epsilon: f64, penalty: f64, tol: f64) -> Self {
        Self {
            improvement,
            surrogate,
            epsilon,
            penalty,
            holds: improvement >= surrogate - penalty - tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub alpha_low: f64,
    pub alpha_high: f64,
    /// High tier under the low tier's change.
    pub high: BoundCheck,
    /// Low tier under its own change and the high tier's response.
    pub low: BoundCheck,
}

impl Lemma1Report {
    pub fn holds(&self) -> bool {
        self.high.holds && self.low.holds
    }
}

/// Inputs of one α-coupled update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledUpdate {
    pub policy_high: Policy,
    /// `π'_L`.
    pub old_low: Policy,
    /// Policy mixed into `π'_L` with weight `α_L` to form `π_L`.
    pub target_low: Policy,
    pub alpha_low: f64,
    pub alpha_high: f64,
}

/// Both bounds evaluated exactly with tolerance `tol`.
///
/// `π_L = (1−α_L)·π'_L + α_L·target` per state and the high tier's response
/// is `f(π_L) = (1−α_H)·π_H + α_H·BR_H(π_L)` per state. `ρ` is the value
/// averaged over a uniform start.
///
/// High tier, `π_H` fixed: with `A(s, a) = r_new(s, a) + γ·P_new V_old − V_old(s)`,
/// `ρ_H(π_H, π_L) − ρ_H(π_H, π'_L) ≥ L − 4ε_H·γ·α²/((1−γ)(1 − (1−α_L)^T γ))`
/// where `α = 1 − (1−α_L)^T`.
///
/// Low tier: evaluated on the cycle-synchronous process whose state is
/// `(s_L, phase, active a_H)`. The active high action is redrawn from the
/// high policy when a cycle ends and held for `T` steps; the first cycle's
/// action is drawn from `π_H` under both old and new policies, so the start
/// distribution is shared.
/// `ρ_L(π_L, f(π_L)) − ρ_L(π'_L, π_H) ≥ L − 4(1 − (1−α_L)(1−α_H)^{1/T})·ε_L·
/// {1/(1−γ) − (1 − γ^T(1−α_L)^T)/((1 − γ(1−α_L))(1 − γ^T(1−α_L)^T(1−α_H)))}`.
///
/// `ε` is the largest one-step advantage magnitude `|r + γV_old(s') − V_old(s)|`
/// over every realizable outcome (all actions of both tiers, all low-tier
/// trajectories within a cycle), a superset of the outcomes either policy
/// pair can produce.
pub fn check_lemma1(mdp: &TabularTTMDP, update: &CoupledUpdate, tol: f64) -> Result<Lemma1Report> {
    mdp.validate()?;
    let CoupledUpdate {
        policy_high,
        old_low,
        target_low,
        alpha_low,
        alpha_high,
    } = update;
    let (al, ah) = (*alpha_low, *alpha_high);
    if !(0.0..=1.0).contains(&al) || !(0.0..=1.0).contains(&ah) {
        return Err(Error::InvalidArgument("α_L, α_H must be in [0, 1]".into()));
    }
    let new_low = mix(old_low, target_low, al);
    let response = deterministic(&mdp.high_best_response(&new_low), mdp.n_high_actions);
    let new_high = mix(policy_high, &response, ah);
    Ok(Lemma1Report {
        alpha_low: al,
        alpha_high: ah,
        high: high_bound(mdp, policy_high, old_low, &new_low, al, tol),
        low: low_bound(mdp, policy_high, &new_high, old_low, &new_low, al, ah, tol),
    })
}

fn high_bound(mdp: &TabularTTMDP, pi_h: &Policy, old_low: &Policy, new_low: &Policy, alpha_l: f64, tol: f64) -> BoundCheck {
    let n = mdp.n_high_states;
    let gamma = mdp.gamma_high;
    let d0 = vec![1.0 / n as f64; n];
    let old = mdp.high_mdp(old_low);
    let new = mdp.high_mdp(new_low);
    let v_old = old.evaluate(pi_h);
    let v_new = new.evaluate(pi_h);
    let rho_old: f64 = v_old.iter().zip(&d0).map(|(v, d)| v * d).sum();
    let rho_new: f64 = v_new.iter().zip(&d0).map(|(v, d)| v * d).sum();
    let q_new = new.q_values(&v_old);
    let visits = old.visitation(pi_h, &d0);
    let surrogate: f64 = (0..n)
        .map(|s| visits[s] * pi_h[s].iter().enumerate().map(|(a, p)| p * (q_new[s][a] - v_old[s])).sum::<f64>())
        .sum();

    // Enumerate every low action sequence of one cycle.
    let (sl_actions, t) = (mdp.n_low_actions, mdp.cycle_len);
    let mut epsilon: f64 = 0.0;
    let sequences = sl_actions.pow(t as u32);
    for s in 0..n {
        for a in 0..mdp.n_high_actions {
            for code in 0..sequences {
                let mut c = code;
                let mut sl = mdp.entry[s];
                let mut q = 0.0;
                for _ in 0..t {
                    let al = c % sl_actions;
                    c /= sl_actions;
                    q += mdp.coupling_reward[sl][al];
                    sl = mdp.low_next[sl][al][a];
                }
                let (r, p) = mdp.high_outcome(s, a, q / t as f64, mdp.end_bit[sl]);
                let next: f64 = p.iter().zip(&v_old).map(|(x, v)| x * v).sum();
                epsilon = epsilon.max((r + gamma * next - v_old[s]).abs());
            }
        }
    }

    let keep = (1.0 - alpha_l).powi(t as i32);
    let alpha = 1.0 - keep;
    let penalty = 4.0 * epsilon * gamma * alpha * alpha / ((1.0 - gamma) * (1.0 - keep * gamma));
    BoundCheck::new(rho_new - rho_old, surrogate, epsilon, penalty, tol)
}

/// Cycle-synchronous low-tier chain for one (low, next-high) policy pair.
struct SyncChain {
    reward: DVector<f64>,
    kernel: DMatrix<f64>,
}

fn sync_index(mdp: &TabularTTMDP, s: usize, phase: usize, a_h: usize) -> usize {
    (s * mdp.cycle_len + phase) * mdp.n_high_actions + a_h
}

fn sync_chain(mdp: &TabularTTMDP, pi_l: &Policy, pi_h_next: &Policy) -> SyncChain {
    let t = mdp.cycle_len;
    let n = mdp.n_low_states * t * mdp.n_high_actions;
    let mut reward = DVector::zeros(n);
    let mut kernel = DMatrix::zeros(n, n);
    for s in 0..mdp.n_low_states {
        for phase in 0..t {
            for ah in 0..mdp.n_high_actions {
                let z = sync_index(mdp, s, phase, ah);
                for (a, &p) in pi_l[s].iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    reward[z] += p * mdp.low_reward[s][a][ah];
                    let s2 = mdp.low_next[s][a][ah];
                    if phase + 1 < t {
                        kernel[(z, sync_index(mdp, s2, phase + 1, ah))] += p;
                    } else {
                        for (ah2, &q) in pi_h_next[mdp.context[s2]].iter().enumerate() {
                            kernel[(z, sync_index(mdp, s2, 0, ah2))] += p * q;
                        }
                    }
                }
            }
        }
    }
    SyncChain { reward, kernel }
}

#[allow(clippy::too_many_arguments)]
fn low_bound(
    mdp: &TabularTTMDP,
    old_high: &Policy,
    new_high: &Policy,
    old_low: &Policy,
    new_low: &Policy,
    alpha_l: f64,
    alpha_h: f64,
    tol: f64,
) -> BoundCheck {
    let t = mdp.cycle_len;
    let gamma = mdp.gamma_low;
    let n = mdp.n_low_states * t * mdp.n_high_actions;
    let mut d0 = DVector::zeros(n);
    for s in 0..mdp.n_low_states {
        for (ah, &p) in old_high[mdp.context[s]].iter().enumerate() {
            d0[sync_index(mdp, s, 0, ah)] += p / mdp.n_low_states as f64;
        }
    }
    let old = sync_chain(mdp, old_low, old_high);
    let new = sync_chain(mdp, new_low, new_high);
    let id = DMatrix::<f64>::identity(n, n);
    let solve = |m: DMatrix<f64>, rhs: &DVector<f64>| m.lu().solve(rhs).expect("I − γP is nonsingular");
    let v_old = solve(&id - &old.kernel * gamma, &old.reward);
    let v_new = solve(&id - &new.kernel * gamma, &new.reward);
    let improvement = d0.dot(&v_new) - d0.dot(&v_old);
    let advantage = &new.reward + &new.kernel * &v_old * gamma - &v_old;
    let visits = solve(&id - old.kernel.transpose() * gamma, &d0);
    let surrogate = visits.dot(&advantage);

    let mut epsilon: f64 = 0.0;
    for s in 0..mdp.n_low_states {
        for phase in 0..t {
            for ah in 0..mdp.n_high_actions {
                let z = sync_index(mdp, s, phase, ah);
                for a in 0..mdp.n_low_actions {
                    let r = mdp.low_reward[s][a][ah];
                    let s2 = mdp.low_next[s][a][ah];
                    let nexts: Vec<usize> = if phase + 1 < t {
                        vec![sync_index(mdp, s2, phase + 1, ah)]
                    } else {
                        (0..mdp.n_high_actions).map(|ah2| sync_index(mdp, s2, 0, ah2)).collect()
                    };
                    for z2 in nexts {
                        epsilon = epsilon.max((r + gamma * v_old[z2] - v_old[z]).abs());
                    }
                }
            }
        }
    }

    let tf = t as i32;
    let keep_l = 1.0 - alpha_l;
    let keep_h = 1.0 - alpha_h;
    let per_step = 1.0 - keep_l * keep_h.powf(1.0 / t as f64);
    let gt = gamma.powi(tf) * keep_l.powi(tf);
    let brace = 1.0 / (1.0 - gamma) - (1.0 - gt) / ((1.0 - gamma * keep_l) * (1.0 - gt * keep_h));
    let penalty = 4.0 * per_step * epsilon * brace;
    BoundCheck::new(improvement, surrogate, epsilon, penalty, tol)
}
