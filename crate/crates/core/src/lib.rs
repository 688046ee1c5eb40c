//! Learnability numerics and an online difficulty filtering simulator for
//! reinforcement learning with verifiable rewards.
//!
//! * [`reward`]: reward distributions with exact cumulants and CGFs.
//! * [`learnability`]: reverse KL to the soft-optimal policy, the variance
//!   bound, and residual diagnostics.
//! * [`grpo`]: group-relative advantages, pass rates, difficulty categories.
//! * [`sim`]: a synthetic policy whose pass rates follow an item-response
//!   curve and improve with training.
//! * [`orchestrator`]: fixed-size batch assembly with online filtering,
//!   bounded concurrency, and cancellation; baseline strategies.
//! * [`config`], [`runlog`], [`experiment`], [`bounds`]: experiment harness
//!   pieces used by the CLI.

pub mod bounds;
pub mod config;
pub mod experiment;
pub mod grpo;
pub mod learnability;
mod math;
pub mod orchestrator;
pub mod reward;
pub mod rng;
pub mod runlog;
pub mod sim;

pub use config::{ConfigError, ExperimentConfig};
pub use grpo::{categorize, empirical_pass_rate, group_advantages, Category, DifficultyCategory, RolloutGroup};
pub use learnability::{exact_reverse_kl, soft_value, variance_lower_bound, LearnabilityReport, Temperature};
pub use math::{log_sum_exp, logistic};
pub use orchestrator::{
    fill_batch, run_training, BatchSpec, ExecutionMode, FilterPolicy, OrchestratorError, StrategyKind, TrainBatch,
};
pub use reward::{CumulantSet, RewardDistribution};
pub use rng::Seed;
pub use runlog::{RunLog, StepRecord};
pub use sim::{Dynamics, SimPolicy, SimState, TaskId, TaskPool};
