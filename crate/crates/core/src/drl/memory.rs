//! Replay memories and return/advantage estimation.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{GroupMask, HighTierAction, LowTierAction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordedAction {
    High(HighTierAction),
    Low(LowTierAction),
}

/// One stored transition. `state` holds network features; `target` is the
/// critic regression target and `high_advantage` the broadcast `Ã_H` of the
/// sample's cycle (low tier only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    pub tier: Tier,
    pub slot: u64,
    pub state: Vec<f64>,
    pub action: RecordedAction,
    pub reward: f64,
    pub allowed: GroupMask,
    pub target: f64,
    pub high_advantage: f64,
    pub next_state: Option<Vec<f64>>,
}

/// Fixed-capacity FIFO ring.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends an item, evicting the oldest when full; returns the evicted item.
    pub fn push(&mut self, item: T) -> Option<T> {
        let evicted = if self.items.len() == self.capacity {
            self.items.pop_front()
        } else {
            None
        };
        self.items.push_back(item);
        evicted
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    /// Uniform sample of `k` distinct items (all items when `k ≥ len`).
    pub fn sample<R: Rng>(&self, rng: &mut R, k: usize) -> Vec<&T> {
        if k >= self.items.len() {
            return self.items.iter().collect();
        }
        let mut idx = index::sample(rng, self.items.len(), k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.items[i]).collect()
    }
}

/// Discounted reward-to-go `Σ_{l≥0} γ^l R_{t+l}` up to the end of the slice.
pub fn discounted_returns(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + discount * acc;
        out[t] = acc;
    }
    out
}

/// `Ã(s_t, a_t) = Σ_{l≥0} γ^l R_{t+l} − V(s_t)` over a contiguous slice.
pub fn estimate_advantages(rewards: &[f64], values: &[f64], discount: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::InvalidArgument("empty slice".into()));
    }
    if values.len() != rewards.len() {
        return Err(Error::ShapeMismatch {
            what: "value baseline",
            expected: rewards.len(),
            got: values.len(),
        });
    }
    Ok(discounted_returns(rewards, discount)
        .into_iter()
        .zip(values)
        .map(|(g, v)| g - v)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_discounted_sum() {
        let a = estimate_advantages(&[1.0, 2.0, 4.0], &[0.0; 3], 0.5).unwrap();
        assert_eq!(a[0], 3.0);
    }

    #[test]
    fn single_step_advantage_is_reward() {
        assert_eq!(estimate_advantages(&[2.5], &[0.0], 0.99).unwrap(), vec![2.5]);
    }

    #[test]
    fn true_values_give_zero_advantage() {
        let r = [1.0, -1.0, 3.0, 0.5];
        let v = discounted_returns(&r, 0.9);
        assert!(estimate_advantages(&r, &v, 0.9).unwrap().iter().all(|a| *a == 0.0));
    }

    #[test]
    fn empty_slice_is_an_error() {
        assert!(estimate_advantages(&[], &[], 0.9).is_err());
    }

    #[test]
    fn fifo_eviction() {
        let mut m = ReplayMemory::new(2);
        assert_eq!(m.push(1), None);
        assert_eq!(m.push(2), None);
        assert_eq!(m.push(3), Some(1));
        assert_eq!(m.iter().copied().collect::<Vec<_>>(), vec![2, 3]);
    }
}
