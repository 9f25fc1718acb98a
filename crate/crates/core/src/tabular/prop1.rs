//! Exact sequential updating and its monotone-improvement check.

use serde::{Deserialize, Serialize};

use super::mdp::{deterministic, policy_from_index, sup_norm, value_iteration_oracle, TabularTTMDP};
use crate::error::{Error, Result};

/// Values of both tiers after one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub policy_high: Vec<usize>,
    pub policy_low: Vec<usize>,
    pub value_high: Vec<f64>,
    pub value_low: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    /// Stage 0 holds the initial policies.
    pub stages: Vec<Stage>,
    /// Most negative per-state value change over all stages and both tiers.
    pub worst_decrease: f64,
    pub monotone: bool,
    /// `‖V_H − V_H*‖_∞` against the oracle for the final low policy.
    pub final_gap_high: f64,
    /// `‖V_L − V_L*‖_∞` against the oracle for the final high policy.
    pub final_gap_low: f64,
    pub optimal: bool,
}

impl Prop1Report {
    pub fn pass(&self) -> bool {
        self.monotone && self.optimal
    }
}

const STICKY_TOL: f64 = 1e-12;
const MONOTONE_TOL: f64 = 1e-9;

/// Runs `stages` exact sequential updates from the given deterministic
/// policies.
///
/// In each stage the low tier enumerates its deterministic policies `π̄_L`.
/// For each it predicts the high tier's response `f(π̄_L)`, the one-step
/// rollout improvement of `π_H` against `π̄_L`, and scores
/// `[ρ_L(π̄_L, f(π̄_L)) − ρ_L(π_L, π_H)] + [ρ_H(π_H, π̄_L) − ρ_H(π_H, π_L)]`.
/// Only candidates whose post-stage values `V^{f(π̄_L)}(·; π̄_L)` and
/// `V^{π̄_L}(·; f(π̄_L))` are non-decreasing at every state are eligible; the
/// best eligible one is adopted (ties keep the earlier index, the current
/// policy first). The high tier then applies the one-step rollout.
/// Monotonicity is asserted on the realized values, and the final values are
/// compared with the value-iteration oracle against the final counterpart.
pub fn check_proposition1(mdp: &TabularTTMDP, init_high: &[usize], init_low: &[usize], stages: usize) -> Result<Prop1Report> {
    mdp.validate()?;
    let (sh, ah, sl, al) = (mdp.n_high_states, mdp.n_high_actions, mdp.n_low_states, mdp.n_low_actions);
    if init_high.len() != sh || init_low.len() != sl || init_high.iter().any(|&a| a >= ah) || init_low.iter().any(|&a| a >= al) {
        return Err(Error::InvalidArgument("initial policies do not match the instance".into()));
    }
    let n_low = (al as f64).powi(sl as i32);
    if n_low > 1e5 {
        return Err(Error::InvalidArgument("too many low-tier policies to enumerate".into()));
    }
    let values = |ph: &[usize], pl: &[usize]| {
        let dh = deterministic(ph, ah);
        let dl = deterministic(pl, al);
        (mdp.high_mdp(&dl).evaluate(&dh), mdp.low_mdp(&dh).evaluate(&dl))
    };
    let mut pi_h = init_high.to_vec();
    let mut pi_l = init_low.to_vec();
    let (vh, vl) = values(&pi_h, &pi_l);
    let mut trace = vec![Stage {
        policy_high: pi_h.clone(),
        policy_low: pi_l.clone(),
        value_high: vh,
        value_low: vl,
    }];
    let mut worst: f64 = 0.0;
    for _ in 0..stages {
        let cur = trace.last().expect("nonempty").clone();
        let dh = deterministic(&pi_h, ah);
        let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
        let current_index = super::mdp::policy_index(&pi_l, al);
        let order = std::iter::once(current_index).chain((0..n_low as u64).filter(|&i| i != current_index));
        for idx in order {
            let cand = policy_from_index(idx, sl, al);
            let dc = deterministic(&cand, al);
            let high = mdp.high_mdp(&dc);
            let vh_same = high.evaluate(&dh);
            let response = high.greedy_sticky(&vh_same, &pi_h, STICKY_TOL);
            let vh_next = high.evaluate(&deterministic(&response, ah));
            let vl_next = mdp.low_mdp(&deterministic(&response, ah)).evaluate(&dc);
            let eligible = vh_next.iter().zip(&cur.value_high).all(|(a, b)| a >= &(b - MONOTONE_TOL))
                && vl_next.iter().zip(&cur.value_low).all(|(a, b)| a >= &(b - MONOTONE_TOL));
            if !eligible {
                continue;
            }
            let gain = (mean(&vl_next) - mean(&cur.value_low)) + (mean(&vh_same) - mean(&cur.value_high));
            if best.as_ref().is_none_or(|(g, _, _)| gain > g + STICKY_TOL) {
                best = Some((gain, cand, response));
            }
        }
        if let Some((_, cand, response)) = best {
            pi_l = cand;
            pi_h = response;
        }
        let (vh, vl) = values(&pi_h, &pi_l);
        for (a, b) in vh.iter().zip(&cur.value_high).chain(vl.iter().zip(&cur.value_low)) {
            worst = worst.min(a - b);
        }
        trace.push(Stage {
            policy_high: pi_h.clone(),
            policy_low: pi_l.clone(),
            value_high: vh,
            value_low: vl,
        });
    }
    let last = trace.last().expect("nonempty");
    let opt_h = value_iteration_oracle(&mdp.high_mdp(&deterministic(&last.policy_low, al)));
    let opt_l = value_iteration_oracle(&mdp.low_mdp(&deterministic(&last.policy_high, ah)));
    let final_gap_high = sup_norm(&last.value_high, &opt_h);
    let final_gap_low = sup_norm(&last.value_low, &opt_l);
    Ok(Prop1Report {
        stages: trace,
        worst_decrease: worst,
        monotone: worst >= -MONOTONE_TOL,
        final_gap_high,
        final_gap_low,
        optimal: final_gap_high <= 1e-6 && final_gap_low <= 1e-6,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
