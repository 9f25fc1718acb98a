//! Per-cycle message sizes between the satellite and the UE.

use serde::{Deserialize, Serialize};

/// Exchanged real-valued elements per cycle: `6 + T + M + (2 + M)·n̄·T`.
pub fn comm_overhead_elements(cycle_len: usize, total_rbs: usize, n_bar: usize) -> usize {
    6 + cycle_len + total_rbs + (2 + total_rbs) * n_bar * cycle_len
}

/// Bytes per cycle with `element_bytes` bytes per element.
pub fn comm_overhead(cycle_len: usize, total_rbs: usize, n_bar: usize, element_bytes: usize) -> usize {
    comm_overhead_elements(cycle_len, total_rbs, n_bar) * element_bytes
}

/// Element counts of the messages actually built in one cycle.
///
/// Downlink `(s_H^k, a_H^k, R_H^{k−1})`: 3 position coordinates and `T`
/// average SNRs, 2 beam angles and `M` RB indicators, 1 reward. Uplink
/// trajectory: `n̄·T` low actions of 2 beam angles and `M` RB indicators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleMessages {
    pub downlink_records: usize,
    pub uplink_trajectories: usize,
    pub downlink_elements: usize,
    pub uplink_elements: usize,
}

impl CycleMessages {
    pub fn total_elements(&self) -> usize {
        self.downlink_elements + self.uplink_elements
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_value() {
        assert_eq!(comm_overhead(10, 100, 8, 4), 33_104);
    }

    #[test]
    fn zero_depth_is_state_action_reward_only() {
        assert_eq!(comm_overhead(10, 100, 0, 4), (6 + 10 + 100) * 4);
    }
}
