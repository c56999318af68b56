//! Shared-seed test sets: every variant (planner or policy) is evaluated
//! on the identical list of episode worlds.

use crate::planners::demo::mix_seed;

/// Stream tag separating test-set seeds from training and evaluation
/// streams.
const TEST_STREAM: u64 = 0x7e57_5e7;

/// Deterministic list of episode seeds for the benchmark. Trial `k`
/// resets the environment from `seeds[k]` under every variant.
pub fn build_test_set(master_seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| mix_seed(master_seed ^ TEST_STREAM, i)).collect()
}
