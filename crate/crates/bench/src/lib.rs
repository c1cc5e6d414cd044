//! Shared inputs for the benchmarks in `benches/`.

use avrel_core::simulation::{canonical_scenarios, resample_exposure, simulate_fleet, synthetic_pool};
use avrel_core::Fleet;

/// A Scenario 1 fleet of `n` units on the synthetic exposure pool.
pub fn scenario_fleet(n: usize, seed: u64) -> Fleet {
    let pool = resample_exposure(&synthetic_pool(), n, seed).expect("non-empty pool");
    simulate_fleet(&pool, &canonical_scenarios()[0].clone().into(), seed ^ 0x5EED).expect("valid truth")
}
