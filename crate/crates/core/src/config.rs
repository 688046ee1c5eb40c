//! Experiment configuration in a flat `key = value` text format.
//!
//! Blank lines are ignored and `#` starts a comment. Keys missing from a
//! file take their default; unknown or repeated keys are rejected.
//! [`ExperimentConfig::to_config_string`] writes every key, and parsing
//! that output yields an identical config.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::grpo::DEFAULT_EPSILON;
use crate::orchestrator::{ExecutionMode, StrategyKind};
use crate::rng::Seed;
use crate::sim::{Dynamics, SimError, TaskPool};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("`{key}`: invalid value `{value}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub pool_size: usize,
    pub difficulty_mean: f64,
    pub difficulty_std: f64,
    pub initial_ability: f64,
    pub eta: f64,
    pub dynamics: Dynamics,
    pub iterations: u64,
    pub steps_per_iteration: u64,
    pub batch_size: usize,
    pub group_size: usize,
    pub max_concurrency: usize,
    pub strategy: StrategyKind,
    pub epsilon: f64,
    pub beta: f64,
    pub holdout_size: usize,
    pub output_path: PathBuf,
    pub execution: ExecutionMode,
    /// Optional `task_id, difficulty` file replacing the generated pool.
    pub task_file: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pool_size: 2000,
            difficulty_mean: 0.0,
            difficulty_std: 2.0,
            initial_ability: -2.0,
            eta: 0.05,
            dynamics: Dynamics::VarianceDriven,
            iterations: 1,
            steps_per_iteration: 200,
            batch_size: 16,
            group_size: 16,
            max_concurrency: 32,
            strategy: StrategyKind::Plain,
            epsilon: DEFAULT_EPSILON,
            beta: 1.0,
            holdout_size: 1024,
            output_path: PathBuf::from("out"),
            execution: ExecutionMode::Sequential,
            task_file: None,
        }
    }
}

const KEYS: [&str; 19] = [
    "seed",
    "pool_size",
    "difficulty_mean",
    "difficulty_std",
    "initial_ability",
    "eta",
    "dynamics",
    "iterations",
    "steps_per_iteration",
    "batch_size",
    "group_size",
    "max_concurrency",
    "strategy",
    "epsilon",
    "beta",
    "holdout_size",
    "output_path",
    "execution",
    "task_file",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        text.parse()
    }

    pub fn total_steps(&self) -> u64 {
        self.iterations.saturating_mul(self.steps_per_iteration)
    }

    /// Checks ranges. Iteration and step counts may be zero (an empty run);
    /// every other count must be positive.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.pool_size == 0 && self.task_file.is_none() {
            return invalid("pool_size must be positive".into());
        }
        if self.batch_size == 0 {
            return invalid("batch_size must be positive".into());
        }
        if self.group_size < 2 {
            return invalid("group_size must be at least 2".into());
        }
        if self.max_concurrency == 0 {
            return invalid("max_concurrency must be positive".into());
        }
        if self.holdout_size == 0 {
            return invalid("holdout_size must be positive".into());
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return invalid(format!("eta must be > 0, got {}", self.eta));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return invalid(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return invalid(format!("epsilon must lie in (0, 0.5), got {}", self.epsilon));
        }
        if !self.difficulty_mean.is_finite() || !(self.difficulty_std.is_finite() && self.difficulty_std >= 0.0) {
            return invalid("difficulty_mean must be finite and difficulty_std >= 0".into());
        }
        if !self.initial_ability.is_finite() {
            return invalid("initial_ability must be finite".into());
        }
        Ok(())
    }

    /// The training pool: the task file when configured, otherwise
    /// `pool_size` tasks generated from the seed.
    pub fn load_pool(&self) -> Result<TaskPool, SimError> {
        let pool = match &self.task_file {
            Some(path) => TaskPool::from_reader(BufReader::new(File::open(path)?))?,
            None => TaskPool::generate(self.pool_size, self.difficulty_mean, self.difficulty_std, Seed(self.seed))?,
        };
        if pool.is_empty() {
            return Err(SimError::EmptyPool);
        }
        Ok(pool)
    }

    pub fn with_strategy(&self, strategy: StrategyKind) -> Self {
        Self { strategy, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "seed" => self.seed.to_string(),
                "pool_size" => self.pool_size.to_string(),
                "difficulty_mean" => self.difficulty_mean.to_string(),
                "difficulty_std" => self.difficulty_std.to_string(),
                "initial_ability" => self.initial_ability.to_string(),
                "eta" => self.eta.to_string(),
                "dynamics" => self.dynamics.to_string(),
                "iterations" => self.iterations.to_string(),
                "steps_per_iteration" => self.steps_per_iteration.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "group_size" => self.group_size.to_string(),
                "max_concurrency" => self.max_concurrency.to_string(),
                "strategy" => self.strategy.to_string(),
                "epsilon" => self.epsilon.to_string(),
                "beta" => self.beta.to_string(),
                "holdout_size" => self.holdout_size.to_string(),
                "output_path" => self.output_path.display().to_string(),
                "execution" => self.execution.to_string(),
                "task_file" => match &self.task_file {
                    Some(p) => p.display().to_string(),
                    None => continue,
                },
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "pool_size" => self.pool_size = parse_value(key, value)?,
            "difficulty_mean" => self.difficulty_mean = parse_value(key, value)?,
            "difficulty_std" => self.difficulty_std = parse_value(key, value)?,
            "initial_ability" => self.initial_ability = parse_value(key, value)?,
            "eta" => self.eta = parse_value(key, value)?,
            "dynamics" => self.dynamics = parse_value(key, value)?,
            "iterations" => self.iterations = parse_value(key, value)?,
            "steps_per_iteration" => self.steps_per_iteration = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "group_size" => self.group_size = parse_value(key, value)?,
            "max_concurrency" => self.max_concurrency = parse_value(key, value)?,
            "strategy" => self.strategy = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "beta" => self.beta = parse_value(key, value)?,
            "holdout_size" => self.holdout_size = parse_value(key, value)?,
            "output_path" => self.output_path = PathBuf::from(value),
            "execution" => self.execution = parse_value(key, value)?,
            "task_file" => self.task_file = Some(PathBuf::from(value)),
            _ => unreachable!("keys are checked before assignment"),
        }
        Ok(())
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut config = ExperimentConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, msg: format!("expected `key = value`, got `{body}`") })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            if seen.contains(&key) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
            seen.push(key);
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }
}
