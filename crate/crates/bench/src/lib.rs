//! Shared fixtures for the criterion benches.

use learnfilter_core::{ExperimentConfig, StrategyKind};

/// A default-shaped config scaled down so one run takes milliseconds.
pub fn small_run(strategy: StrategyKind, steps: u64) -> ExperimentConfig {
    ExperimentConfig { pool_size: 500, steps_per_iteration: steps, holdout_size: 256, strategy, ..Default::default() }
}

/// Evenly spaced pass rates strictly inside (0, 1).
pub fn pass_rate_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| i as f64 / (points + 1) as f64).collect()
}
