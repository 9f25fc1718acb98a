//! Trust-region policy step for the UE and least-squares critic updates.

use serde::{Deserialize, Serialize};

use super::policy::{self, LowPolicy};
use crate::environment::{GroupMask, LowTierAction};
use crate::error::{Error, Result};
use crate::neural::{AdamConfig, PolicyParameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrpoConfig {
    /// Mean-KL trust region radius δ_KL.
    pub kl_limit: f64,
    pub cg_iters: usize,
    pub backtrack_coeff: f64,
    pub backtrack_steps: usize,
    pub discount: f64,
    /// Tikhonov damping added to the Fisher matrix inside conjugate gradient.
    pub cg_damping: f64,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            kl_limit: 0.01,
            cg_iters: 10,
            backtrack_coeff: 0.8,
            backtrack_steps: 10,
            discount: 0.99,
            cg_damping: 0.01,
        }
    }
}

/// One UE sample with its low-tier advantage and the broadcast `Ã_H` of its cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub features: Vec<f64>,
    pub allowed: GroupMask,
    pub action: LowTierAction,
    pub adv_low: f64,
    pub adv_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrpoOutcome {
    pub accepted: bool,
    /// Measured mean `KL(old ‖ new)` of the accepted point (or of the last tried point).
    pub kl: f64,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub backtracks: usize,
    /// Infinity norm of the applied parameter change (0 when rejected).
    pub update_inf_norm: f64,
}

impl TrpoOutcome {
    fn unchanged(surrogate: f64) -> Self {
        Self {
            accepted: false,
            kl: 0.0,
            surrogate_before: surrogate,
            surrogate_after: surrogate,
            backtracks: 0,
            update_inf_norm: 0.0,
        }
    }
}

fn weights(samples: &[PolicySample], high_weight: f64) -> Vec<f64> {
    samples.iter().map(|s| s.adv_low + high_weight * s.adv_high).collect()
}

/// Sampled surrogate `mean_i ratio_i·(Ã_L + w·Ã_H)` of `params` against
/// reference log-probabilities.
pub fn surrogate_at(
    policy: &LowPolicy,
    params: &[f64],
    samples: &[PolicySample],
    old_logp: &[f64],
    high_weight: f64,
) -> Result<f64> {
    let mut net = policy.net.clone();
    net.params.copy_from_slice(params);
    let w = weights(samples, high_weight);
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let logits = net.predict(&s.features)?;
        let lp = policy::log_prob(&logits, s.allowed, policy.groups, &s.action);
        total += (lp - old_logp[i]).exp() * w[i];
    }
    Ok(total / samples.len() as f64)
}

/// Conjugate gradient for `A x = b` with `A` given as a product.
pub fn conjugate_gradient<F: Fn(&[f64]) -> Vec<f64>>(apply: F, b: &[f64], iters: usize) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..iters {
        if rr < 1e-20 {
            break;
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

/// Fisher-vector product of the UE policy over a batch of states.
pub fn policy_fvp(policy: &LowPolicy, samples: &[PolicySample], v: &[f64]) -> Result<Vec<f64>> {
    let caches = samples
        .iter()
        .map(|s| policy.forward(&s.features))
        .collect::<Result<Vec<_>>>()?;
    Ok(policy.net.fisher_vector_product(
        &caches,
        |i, u| policy::fisher_logit_product(&caches[i].output, samples[i].allowed, policy.groups, u),
        v,
    ))
}

/// Maximizes the surrogate of Eq. `E[ratio·(Ã_L + w·Ã_H)]` under mean KL ≤ δ.
///
/// `high_weight` is 1 for the collaborative scheme and 0 when the UE only
/// estimates its own advantage. Parameters are written only when a backtrack
/// point satisfies both the KL limit and strict surrogate improvement.
pub fn trpo_update(policy: &mut LowPolicy, samples: &[PolicySample], high_weight: f64, cfg: &TrpoConfig) -> Result<TrpoOutcome> {
    if samples.is_empty() {
        return Ok(TrpoOutcome::unchanged(0.0));
    }
    let w = weights(samples, high_weight);
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("advantages".into()));
    }
    let groups = policy.groups;
    let caches = samples
        .iter()
        .map(|s| policy.forward(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let old_logits: Vec<Vec<f64>> = caches.iter().map(|c| c.output.clone()).collect();
    let old_logp: Vec<f64> = samples
        .iter()
        .zip(&old_logits)
        .map(|(s, l)| policy::log_prob(l, s.allowed, groups, &s.action))
        .collect();
    let surrogate_before = w.iter().sum::<f64>() / samples.len() as f64;

    let mut grad = vec![0.0; policy.net.params.len()];
    for (i, s) in samples.iter().enumerate() {
        if w[i] == 0.0 {
            continue;
        }
        let d: Vec<f64> = policy::log_prob_grad(&old_logits[i], s.allowed, groups, &s.action)
            .into_iter()
            .map(|x| x * w[i] / samples.len() as f64)
            .collect();
        policy.net.backward_into(&caches[i], &d, &mut grad)?;
    }
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("surrogate gradient".into()));
    }
    if grad.iter().all(|x| *x == 0.0) {
        return Ok(TrpoOutcome::unchanged(surrogate_before));
    }
    let fvp = |v: &[f64]| -> Vec<f64> {
        let mut out = policy.net.fisher_vector_product(
            &caches,
            |i, u| policy::fisher_logit_product(&old_logits[i], samples[i].allowed, groups, u),
            v,
        );
        for (o, x) in out.iter_mut().zip(v) {
            *o += cfg.cg_damping * x;
        }
        out
    };
    let dir = conjugate_gradient(fvp, &grad, cfg.cg_iters);
    let shs: f64 = dir.iter().zip(fvp(&dir)).map(|(a, b)| a * b).sum();
    if !(shs > 0.0) || !shs.is_finite() {
        return Ok(TrpoOutcome::unchanged(surrogate_before));
    }
    let beta = (2.0 * cfg.kl_limit / shs).sqrt();

    let old_params = policy.net.params.clone();
    let mut trial = policy.net.clone();
    let mut last = TrpoOutcome::unchanged(surrogate_before);
    let mut frac = 1.0;
    for k in 0..cfg.backtrack_steps {
        for i in 0..old_params.len() {
            trial.params[i] = old_params[i] + frac * beta * dir[i];
        }
        let mut kl_sum = 0.0;
        let mut surr = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let logits = trial.predict(&s.features)?;
            kl_sum += policy::kl(&old_logits[i], &logits, s.allowed, groups);
            let lp = policy::log_prob(&logits, s.allowed, groups, &s.action);
            surr += (lp - old_logp[i]).exp() * w[i];
        }
        let kl = kl_sum / samples.len() as f64;
        let surr = surr / samples.len() as f64;
        last = TrpoOutcome {
            accepted: false,
            kl,
            surrogate_before,
            surrogate_after: surr,
            backtracks: k,
            update_inf_norm: 0.0,
        };
        if kl.is_finite() && surr.is_finite() && kl <= cfg.kl_limit && surr > surrogate_before {
            let norm = trial
                .params
                .iter()
                .zip(&old_params)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            policy.net.params.copy_from_slice(&trial.params);
            return Ok(TrpoOutcome {
                accepted: true,
                update_inf_norm: norm,
                ..last
            });
        }
        frac *= cfg.backtrack_coeff;
    }
    Ok(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticOutcome {
    pub loss_before: f64,
    pub loss_after: f64,
    pub accepted: bool,
    pub update_inf_norm: f64,
}

/// Mean squared error of a value network on `(input, target)` pairs.
pub fn value_loss(value: &PolicyParameters, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let v = value.predict(x)?[0];
        total += (v - t) * (v - t);
    }
    Ok(total / inputs.len().max(1) as f64)
}

/// `steps` Adam steps on the MSE; the whole update is rolled back if the
/// batch loss increased.
pub fn critic_update(
    value: &mut PolicyParameters,
    inputs: &[Vec<f64>],
    targets: &[f64],
    adam: &AdamConfig,
    steps: usize,
) -> Result<CriticOutcome> {
    if inputs.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            what: "critic targets",
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let before = value_loss(value, inputs, targets)?;
    if inputs.is_empty() || before == 0.0 {
        return Ok(CriticOutcome {
            loss_before: before,
            loss_after: before,
            accepted: false,
            update_inf_norm: 0.0,
        });
    }
    let snapshot = value.clone();
    let n = inputs.len() as f64;
    for _ in 0..steps {
        let (_, grad) = value.gradient(inputs, |i, out| {
            let e = out[0] - targets[i];
            (e * e / n, vec![2.0 * e / n])
        })?;
        value.adam_step(&grad, adam)?;
    }
    let after = value_loss(value, inputs, targets)?;
    if !(after <= before) {
        *value = snapshot;
        return Ok(CriticOutcome {
            loss_before: before,
            loss_after: after,
            accepted: false,
            update_inf_norm: 0.0,
        });
    }
    let norm = value
        .params
        .iter()
        .zip(&snapshot.params)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(CriticOutcome {
        loss_before: before,
        loss_after: after,
        accepted: true,
        update_inf_norm: norm,
    })
}
