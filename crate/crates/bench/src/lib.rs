//! Shared fixtures for the kernel benchmarks.

use kickwave_core::environment::{Environment, EnvironmentConfig};
use kickwave_core::grid::{GridProfile, GridSpec};
use kickwave_core::rng::KeyedRng;

pub fn bench_grid(n: usize) -> GridSpec {
    let h = 1.0 / 64.0;
    GridSpec::new(-(n as f64) * h / 2.0, h, n).expect("valid grid")
}

pub fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = KeyedRng::for_stream(seed, 0xbe);
    (0..n).map(|_| 10.0 * rng.next_f64() - 5.0).collect()
}

pub fn bench_env(seed: u64) -> Environment {
    Environment::new(EnvironmentConfig::default().with_seed(seed)).expect("valid config")
}

pub fn zero_profile(grid: GridSpec) -> GridProfile {
    GridProfile::from_fn(grid, 0, |_| 0.0).expect("valid profile")
}
