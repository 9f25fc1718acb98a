//! Per-slot metric records, moving averages, convergence SD and the
//! weighted-sum utility.

use serde::{Deserialize, Serialize};

use crate::environment::LowStep;
use crate::error::{Error, Result};

/// One simulated slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub slot: u64,
    pub episode: u64,
    /// Most recent completed cycle reward `R_H` (bits/s).
    pub reward_high: f64,
    /// FIFO-smoothed UE reward `R_L` (bits/s).
    pub reward_low: f64,
    /// `Σ b^L b c` over jointly selected RBs (bits/s).
    pub throughput: f64,
    pub demand: f64,
    pub rb_groups: usize,
    /// `|Ω|`, zero when the demand is met.
    pub satisfactory_error: f64,
    pub elevation: f64,
}

impl MetricRecord {
    pub fn from_step(slot: u64, episode: u64, step: &LowStep, reward_high: f64) -> Self {
        Self {
            slot,
            episode,
            reward_high,
            reward_low: step.reward,
            throughput: step.info.throughput,
            demand: step.info.demand,
            rb_groups: step.info.rb_groups,
            satisfactory_error: step.info.omega.abs(),
            elevation: step.info.elevation,
        }
    }
}

/// `out[n] = mean(series[max(0, n−window+1)..=n])`.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("moving-average window must be ≥ 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (n, x) in series.iter().enumerate() {
        sum += x;
        if n >= window {
            sum -= series[n - window];
        }
        // Periodic exact resummation keeps the running sum from drifting.
        if n % 4096 == 4095 {
            sum = series[(n + 1).saturating_sub(window)..=n].iter().sum();
        }
        out.push(sum / (n + 1).min(window) as f64);
    }
    Ok(out)
}

/// Population standard deviation of the trailing `window` values.
pub fn convergence_sd(series: &[f64], window: usize) -> Result<f64> {
    if window == 0 || window > series.len() {
        return Err(Error::InvalidArgument(format!(
            "window {window} must be in 1..={}",
            series.len()
        )));
    }
    let tail = &series[series.len() - window..];
    let mean = tail.iter().sum::<f64>() / window as f64;
    Ok((tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / window as f64).sqrt())
}

/// Raw attributes of one scheme; lower is better for all three.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityAttributes {
    pub satisfactory_error: f64,
    pub rb_groups: f64,
    pub complexity: f64,
}

impl UtilityAttributes {
    fn get(&self, i: usize) -> f64 {
        [self.satisfactory_error, self.rb_groups, self.complexity][i]
    }
}

/// Min-max normalizes each attribute across `schemes` and returns the
/// weighted sums. A constant attribute normalizes to 0 for every scheme.
pub fn utility_score(schemes: &[UtilityAttributes], weights: [f64; 3]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !(*w >= 0.0)) || ((weights.iter().sum::<f64>() - 1.0).abs() > 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "utility weights {weights:?} must be nonnegative and sum to 1"
        )));
    }
    let mut scores = vec![0.0; schemes.len()];
    for (i, w) in weights.iter().enumerate() {
        let lo = schemes.iter().map(|s| s.get(i)).fold(f64::INFINITY, f64::min);
        let hi = schemes.iter().map(|s| s.get(i)).fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            continue;
        }
        for (score, s) in scores.iter_mut().zip(schemes) {
            *score += w * (s.get(i) - lo) / (hi - lo);
        }
    }
    Ok(scores)
}

/// Analytic per-slot search complexity of each scheme family.
pub fn bfs_complexity(grid_points: usize) -> f64 {
    (grid_points as f64).powi(4)
}

/// `log2` of the maximum adjustable angle in degrees.
pub fn pbu_complexity() -> f64 {
    180f64.log2()
}

/// `7²·3²/T` beam-action evaluations plus the rollout's `|A_H|·n̄/T`.
pub fn drl_complexity(cycle_len: usize, high_actions: usize, n_bar: usize) -> f64 {
    let t = cycle_len as f64;
    49.0 * 9.0 / t + (high_actions * n_bar) as f64 / t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_stays_constant() {
        let ma = moving_average(&[3.0; 50], 7).unwrap();
        assert!(ma.iter().all(|&x| x == 3.0));
    }

    #[test]
    fn two_point_sd() {
        assert_eq!(convergence_sd(&[5.0, 0.0, 2.0], 2).unwrap(), 1.0);
    }

    #[test]
    fn equal_weights_average_normalized_attributes() {
        let s = [
            UtilityAttributes {
                satisfactory_error: 0.0,
                rb_groups: 0.0,
                complexity: 0.0,
            },
            UtilityAttributes {
                satisfactory_error: 0.2,
                rb_groups: 0.3,
                complexity: 0.1,
            },
            UtilityAttributes {
                satisfactory_error: 1.0,
                rb_groups: 1.0,
                complexity: 1.0,
            },
        ];
        let u = utility_score(&s, [1.0 / 3.0; 3]).unwrap();
        assert!((u[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bad_weights_rejected() {
        assert!(utility_score(&[], [0.5, 0.6, 0.0]).is_err());
    }
}
