//! UE policy: factorized distribution over (azimuth delta, elevation delta,
//! RB-group bits) with groups outside the open set masked out.

use rand::Rng;

use crate::environment::{GroupMask, HighTierState, LowTierAction, LowTierState};
use crate::error::Result;
use crate::neural::{self, ForwardCache, NetworkSpec, PolicyParameters};

/// Number of low-tier beam levels per angle (`-3Δ..=3Δ`).
pub const BEAM_LEVELS: usize = 7;
pub const BEAM_LOGITS: usize = 2 * BEAM_LEVELS;

/// SNR feature scale: `log10(1 + snr) / SNR_SCALE`.
const SNR_SCALE: f64 = 8.0;

pub fn snr_feature(snr: f64) -> f64 {
    snr.max(0.0).ln_1p() / std::f64::consts::LN_10 / SNR_SCALE
}

/// Network input for the UE: masked per-RB SNRs, receive strengths, open groups.
pub fn low_features(state: &LowTierState, allowed: GroupMask, groups: usize) -> Vec<f64> {
    let mut f: Vec<f64> = state.per_rb_snr.iter().map(|s| snr_feature(*s)).collect();
    f.extend(state.rx_signal_strengths.iter().copied());
    f.extend((0..groups).map(|g| if allowed.contains(g) { 1.0 } else { 0.0 }));
    f
}

pub fn low_feature_len(total_rbs: usize, n_r: usize, groups: usize) -> usize {
    total_rbs + n_r + groups
}

/// Network input for the satellite critic: normalized position and SNR history.
pub fn high_features(state: &HighTierState, orbit_radius: f64) -> Vec<f64> {
    let mut f: Vec<f64> = state.sat_position.iter().map(|x| x / orbit_radius).collect();
    f.extend(state.avg_snr_history.iter().map(|s| snr_feature(*s)));
    f
}

pub fn high_feature_len(cycle_len: usize) -> usize {
    3 + cycle_len
}

/// Indices of a low action in the factorized head: (azimuth level, elevation level).
pub fn beam_levels(action: &LowTierAction) -> (usize, usize) {
    ((action.beam_delta.0 + 3) as usize, (action.beam_delta.1 + 3) as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowPolicy {
    pub net: PolicyParameters,
    pub groups: usize,
}

impl LowPolicy {
    pub fn new(input: usize, trunk: &[usize], head_hidden: &[usize], groups: usize, seed: u64) -> Result<Self> {
        let spec = NetworkSpec::actor(input, trunk, head_hidden, BEAM_LOGITS, groups);
        Ok(Self {
            net: PolicyParameters::init(spec, seed, 0.01)?,
            groups,
        })
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(features)
    }

    pub fn forward(&self, features: &[f64]) -> Result<ForwardCache> {
        self.net.forward(features)
    }

    pub fn sample<R: Rng>(&self, features: &[f64], allowed: GroupMask, rng: &mut R) -> Result<LowTierAction> {
        Ok(sample_action(&self.logits(features)?, allowed, self.groups, rng))
    }

    pub fn mode(&self, features: &[f64], allowed: GroupMask) -> Result<LowTierAction> {
        Ok(mode_action(&self.logits(features)?, allowed, self.groups))
    }
}

fn sample_categorical<R: Rng>(logits: &[f64], rng: &mut R) -> usize {
    let p = neural::softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Best allowed group by logit (lowest index on ties); used when a draw is empty.
fn repair_empty(logits: &[f64], allowed: GroupMask, groups: usize) -> GroupMask {
    let mut best: Option<usize> = None;
    for g in (0..groups).filter(|&g| allowed.contains(g)) {
        if best.is_none_or(|b| logits[BEAM_LOGITS + g] > logits[BEAM_LOGITS + b]) {
            best = Some(g);
        }
    }
    best.map_or(GroupMask(0), |g| GroupMask(1 << g))
}

pub fn sample_action<R: Rng>(logits: &[f64], allowed: GroupMask, groups: usize, rng: &mut R) -> LowTierAction {
    let a = sample_categorical(&logits[..BEAM_LEVELS], rng);
    let e = sample_categorical(&logits[BEAM_LEVELS..BEAM_LOGITS], rng);
    let mut mask = GroupMask(0);
    for g in 0..groups {
        let u: f64 = rng.random();
        if allowed.contains(g) && u < neural::sigmoid(logits[BEAM_LOGITS + g]) {
            mask = mask.with(g);
        }
    }
    if mask.is_empty() {
        mask = repair_empty(logits, allowed, groups);
    }
    LowTierAction {
        beam_delta: (a as i8 - 3, e as i8 - 3),
        mask,
    }
}

pub fn mode_action(logits: &[f64], allowed: GroupMask, groups: usize) -> LowTierAction {
    let a = argmax(&logits[..BEAM_LEVELS]);
    let e = argmax(&logits[BEAM_LEVELS..BEAM_LOGITS]);
    let mut mask = GroupMask(0);
    for g in 0..groups {
        if allowed.contains(g) && logits[BEAM_LOGITS + g] > 0.0 {
            mask = mask.with(g);
        }
    }
    if mask.is_empty() {
        mask = repair_empty(logits, allowed, groups);
    }
    LowTierAction {
        beam_delta: (a as i8 - 3, e as i8 - 3),
        mask,
    }
}

/// Log-probability of an action under the factorized distribution.
pub fn log_prob(logits: &[f64], allowed: GroupMask, groups: usize, action: &LowTierAction) -> f64 {
    let (a, e) = beam_levels(action);
    let mut lp = neural::log_softmax(&logits[..BEAM_LEVELS])[a] + neural::log_softmax(&logits[BEAM_LEVELS..BEAM_LOGITS])[e];
    for g in (0..groups).filter(|&g| allowed.contains(g)) {
        let z = logits[BEAM_LOGITS + g];
        lp += if action.mask.contains(g) {
            neural::log_sigmoid(z)
        } else {
            neural::log_sigmoid(-z)
        };
    }
    lp
}

/// Gradient of [`log_prob`] with respect to the logits.
pub fn log_prob_grad(logits: &[f64], allowed: GroupMask, groups: usize, action: &LowTierAction) -> Vec<f64> {
    let (a, e) = beam_levels(action);
    let mut g = vec![0.0; logits.len()];
    for (off, idx) in [(0, a), (BEAM_LEVELS, e)] {
        let p = neural::softmax(&logits[off..off + BEAM_LEVELS]);
        for i in 0..BEAM_LEVELS {
            g[off + i] = if i == idx { 1.0 } else { 0.0 } - p[i];
        }
    }
    for k in (0..groups).filter(|&k| allowed.contains(k)) {
        let b = if action.mask.contains(k) { 1.0 } else { 0.0 };
        g[BEAM_LOGITS + k] = b - neural::sigmoid(logits[BEAM_LOGITS + k]);
    }
    g
}

/// `KL(π_old ‖ π_new)` for one state.
pub fn kl(old: &[f64], new: &[f64], allowed: GroupMask, groups: usize) -> f64 {
    let mut k = neural::categorical_kl(&old[..BEAM_LEVELS], &new[..BEAM_LEVELS])
        + neural::categorical_kl(&old[BEAM_LEVELS..BEAM_LOGITS], &new[BEAM_LEVELS..BEAM_LOGITS]);
    for g in (0..groups).filter(|&g| allowed.contains(g)) {
        k += neural::bernoulli_kl(old[BEAM_LOGITS + g], new[BEAM_LOGITS + g]);
    }
    k
}

/// Hessian of the KL in the new logits at `new = old`, applied to `u`.
pub fn fisher_logit_product(old: &[f64], allowed: GroupMask, groups: usize, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; old.len()];
    for off in [0, BEAM_LEVELS] {
        let p = neural::softmax(&old[off..off + BEAM_LEVELS]);
        let pu: f64 = (0..BEAM_LEVELS).map(|i| p[i] * u[off + i]).sum();
        for i in 0..BEAM_LEVELS {
            out[off + i] = p[i] * (u[off + i] - pu);
        }
    }
    for g in (0..groups).filter(|&g| allowed.contains(g)) {
        let s = neural::sigmoid(old[BEAM_LOGITS + g]);
        out[BEAM_LOGITS + g] = s * (1.0 - s) * u[BEAM_LOGITS + g];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_masks_respect_the_open_set() {
        let logits: Vec<f64> = (0..BEAM_LOGITS + 5).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let a = sample_action(&logits, GroupMask(0b10110), 5, &mut rng);
            assert!(a.mask.is_subset_of(GroupMask(0b10110)));
            assert!(!a.mask.is_empty());
        }
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let logits: Vec<f64> = (0..BEAM_LOGITS + 5).map(|i| (i as f64 * 1.3).cos()).collect();
        let a = LowTierAction {
            beam_delta: (1, -2),
            mask: GroupMask(0b00101),
        };
        let allowed = GroupMask(0b01101);
        let g = log_prob_grad(&logits, allowed, 5, &a);
        for i in 0..logits.len() {
            let mut p = logits.clone();
            let mut m = logits.clone();
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (log_prob(&p, allowed, 5, &a) - log_prob(&m, allowed, 5, &a)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8, "coord {i}: {fd} vs {}", g[i]);
        }
    }
}
