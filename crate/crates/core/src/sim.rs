//! Synthetic trainable policy over a pool of tasks.
//!
//! Each task has a latent difficulty `d`; the policy has a scalar ability
//! `a`, and its true pass rate on a task is the logistic item-response
//! curve `1 / (1 + exp(-(a - d)))`. A training step moves the ability by an
//! amount driven by the batch's empirical reward variance.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grpo::{GrpoError, RolloutGroup};
use crate::math::logistic;
use crate::orchestrator::TrainBatch;
use crate::rng::{hash_str, Purpose, Seed, Stream};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("task pool is empty")]
    EmptyPool,
    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),
    #[error("cannot apply an update from an empty batch")]
    EmptyBatch,
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("learning rate must be finite and > 0, got {0}")]
    InvalidLearningRate(f64),
    #[error("invalid difficulty distribution: mean={mean}, std={std}")]
    InvalidDifficulty { mean: f64, std: f64 },
    #[error("task file line {line}: {msg}")]
    TaskFile { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
}

/// Opaque task identifier; cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId(Arc<str>);

impl TaskId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        Self(Arc::from(s))
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        Self(Arc::from(s))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub difficulty: f64,
    key: u64,
}

impl Task {
    pub fn new(id: impl Into<TaskId>, difficulty: f64) -> Self {
        let id = id.into();
        let key = hash_str(id.as_str());
        Self { id, difficulty, key }
    }

    /// Stable integer coordinate used to key this task's random streams.
    pub fn key(&self) -> u64 {
        self.key
    }
}

/// Tasks in queue order plus their per-iteration visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPool {
    tasks: Vec<Task>,
    visit_counts: Vec<u32>,
}

impl TaskPool {
    pub fn new(tasks: Vec<Task>) -> Result<Self, SimError> {
        let mut seen = HashSet::with_capacity(tasks.len());
        for t in &tasks {
            if !seen.insert(t.id.clone()) {
                return Err(SimError::DuplicateTask(t.id.to_string()));
            }
        }
        let visit_counts = vec![0; tasks.len()];
        Ok(Self { tasks, visit_counts })
    }

    /// `size` tasks named `task-<i>` with difficulties drawn from
    /// `Normal(mean, std)`.
    pub fn generate(size: usize, mean: f64, std: f64, seed: Seed) -> Result<Self, SimError> {
        let difficulties = draw_difficulties(size, mean, std, seed.stream(Purpose::Pool, &[]))?;
        let tasks = difficulties.into_iter().enumerate().map(|(i, d)| Task::new(format!("task-{i}"), d)).collect();
        Self::new(tasks)
    }

    /// Parses one `task_id, difficulty` record per line. Blank lines and
    /// `#` comments are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, SimError> {
        let mut tasks = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: &str| SimError::TaskFile { line: i + 1, msg: msg.to_string() };
            let (id, diff) = body.split_once(',').ok_or_else(|| err("expected `task_id, difficulty`"))?;
            let id = id.trim();
            if id.is_empty() {
                return Err(err("empty task id"));
            }
            let difficulty: f64 = diff.trim().parse().map_err(|_| err("difficulty is not a number"))?;
            if !difficulty.is_finite() {
                return Err(err("difficulty must be finite"));
            }
            tasks.push(Task::new(id, difficulty));
        }
        Self::new(tasks)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, index: usize) -> &Task {
        &self.tasks[index]
    }

    pub fn index_of(&self, id: &TaskId) -> Option<usize> {
        self.tasks.iter().position(|t| &t.id == id)
    }

    pub fn visit_counts(&self) -> &[u32] {
        &self.visit_counts
    }

    pub fn visit_count(&self, index: usize) -> u32 {
        self.visit_counts[index]
    }

    pub(crate) fn record_visit(&mut self, index: usize) {
        self.visit_counts[index] += 1;
    }

    pub fn reset_visits(&mut self) {
        self.visit_counts.iter_mut().for_each(|v| *v = 0);
    }

    /// Subset of tasks, in the given index order, with fresh visit counts.
    pub fn select(&self, indices: &[usize]) -> Self {
        let tasks: Vec<Task> = indices.iter().map(|&i| self.tasks[i].clone()).collect();
        let visit_counts = vec![0; tasks.len()];
        Self { tasks, visit_counts }
    }

    /// Number of tasks at each visit count: `hist[k]` tasks visited `k` times.
    pub fn visit_histogram(&self) -> Vec<usize> {
        let max = self.visit_counts.iter().copied().max().unwrap_or(0) as usize;
        let mut hist = vec![0; max + 1];
        for &v in &self.visit_counts {
            hist[v as usize] += 1;
        }
        hist
    }
}

/// Holdout difficulties for validation, from their own stream.
pub fn holdout_difficulties(size: usize, mean: f64, std: f64, seed: Seed) -> Result<Vec<f64>, SimError> {
    draw_difficulties(size, mean, std, seed.stream(Purpose::Holdout, &[]))
}

fn draw_difficulties(size: usize, mean: f64, std: f64, mut rng: Stream) -> Result<Vec<f64>, SimError> {
    if !mean.is_finite() || !(std.is_finite() && std >= 0.0) {
        return Err(SimError::InvalidDifficulty { mean, std });
    }
    let normal = Normal::new(mean, std).map_err(|_| SimError::InvalidDifficulty { mean, std })?;
    Ok((0..size).map(|_| normal.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Dynamics {
    /// `a += η · mean_i p̂_i (1 - p̂_i)` over the batch.
    #[default]
    VarianceDriven,
    /// `a += η` regardless of the batch.
    FixedGain,
}

impl fmt::Display for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dynamics::VarianceDriven => "variance",
            Dynamics::FixedGain => "fixed",
        })
    }
}

impl std::str::FromStr for Dynamics {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "variance" | "variance_driven" => Ok(Dynamics::VarianceDriven),
            "fixed" | "fixed_gain" => Ok(Dynamics::FixedGain),
            other => Err(format!("unknown dynamics `{other}` (expected `variance` or `fixed`)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimPolicy {
    pub ability: f64,
    eta: f64,
    pub dynamics: Dynamics,
}

impl SimPolicy {
    pub fn new(ability: f64, eta: f64, dynamics: Dynamics) -> Result<Self, SimError> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(SimError::InvalidLearningRate(eta));
        }
        Ok(Self { ability, eta, dynamics })
    }

    /// A frozen policy used only to score tasks (offline curation proxies).
    pub fn proxy(ability: f64) -> Self {
        Self { ability, eta: 1.0, dynamics: Dynamics::FixedGain }
    }

    pub fn learning_rate(&self) -> f64 {
        self.eta
    }

    pub fn true_pass_rate(&self, difficulty: f64) -> f64 {
        true_pass_rate(self.ability, difficulty)
    }
}

/// Logistic item-response pass rate `1 / (1 + exp(-(ability - difficulty)))`.
pub fn true_pass_rate(ability: f64, difficulty: f64) -> f64 {
    if ability == difficulty {
        return 0.5;
    }
    logistic(ability - difficulty)
}

/// Everything needed to run one prompt's rollouts off-thread: a snapshot of
/// the pass rate and a dedicated random stream.
#[derive(Debug, Clone)]
pub struct RolloutJob {
    pub task_index: usize,
    pub prompt_id: TaskId,
    pub pass_rate: f64,
    pub group_size: usize,
    stream_key: u64,
}

impl RolloutJob {
    pub fn run(&self) -> RolloutGroup {
        let mut rng = Stream::seed_from_u64(self.stream_key);
        let rewards =
            (0..self.group_size).map(|_| if rng.random::<f64>() < self.pass_rate { 1.0 } else { 0.0 }).collect();
        RolloutGroup::from_binary(self.prompt_id.clone(), rewards).expect("group size >= 2 and binary rewards")
    }
}

/// Pool, policy, and step counter. All randomness is derived from `seed`,
/// the step counter, and task coordinates, so identical seeds replay
/// identical trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub pool: TaskPool,
    pub policy: SimPolicy,
    pub step: u64,
    pub seed: Seed,
}

impl SimState {
    pub fn new(pool: TaskPool, policy: SimPolicy, seed: Seed) -> Self {
        Self { pool, policy, step: 0, seed }
    }

    pub fn true_pass_rate_of(&self, index: usize) -> f64 {
        self.policy.true_pass_rate(self.pool.task(index).difficulty)
    }

    /// Job for task `index` at the current step and visit count.
    pub fn prepare_rollout(&self, index: usize, group_size: usize) -> Result<RolloutJob, SimError> {
        if group_size < 2 {
            return Err(SimError::GroupTooSmall(group_size));
        }
        let task = self.pool.task(index);
        let stream_key =
            self.seed.key(Purpose::Rollout, &[self.step, task.key(), u64::from(self.pool.visit_count(index))]);
        Ok(RolloutJob {
            task_index: index,
            prompt_id: task.id.clone(),
            pass_rate: self.true_pass_rate_of(index),
            group_size,
            stream_key,
        })
    }

    /// `G` Bernoulli draws at the task's true pass rate. Leaves visit
    /// counts untouched.
    pub fn rollout(&self, task_id: &TaskId, group_size: usize) -> Result<RolloutGroup, SimError> {
        let index = self.pool.index_of(task_id).ok_or_else(|| SimError::UnknownTask(task_id.to_string()))?;
        Ok(self.prepare_rollout(index, group_size)?.run())
    }

    /// Simulated generation time of a job, in arbitrary units, uniform on
    /// `[0.5, 1.5)`.
    pub fn job_duration(&self, index: usize) -> f64 {
        let task = self.pool.task(index);
        let mut rng =
            self.seed.stream(Purpose::JobDuration, &[self.step, task.key(), u64::from(self.pool.visit_count(index))]);
        0.5 + rng.random::<f64>()
    }

    /// Moves the ability according to the batch and advances the step.
    pub fn apply_update(&mut self, batch: &TrainBatch) -> Result<(), SimError> {
        if batch.groups.is_empty() {
            return Err(SimError::EmptyBatch);
        }
        let gain = match self.policy.dynamics {
            Dynamics::VarianceDriven => {
                let n = batch.groups.len() as f64;
                batch.groups.iter().map(|g| g.pass_rate * (1.0 - g.pass_rate)).sum::<f64>() / n
            }
            Dynamics::FixedGain => 1.0,
        };
        self.policy.ability += self.policy.eta * gain;
        self.step += 1;
        Ok(())
    }

    /// Mean true pass rate over holdout difficulties.
    pub fn validation_accuracy(&self, holdout: &[f64]) -> Result<f64, SimError> {
        validation_accuracy(self.policy.ability, holdout)
    }
}

pub fn validation_accuracy(ability: f64, holdout: &[f64]) -> Result<f64, SimError> {
    if holdout.is_empty() {
        return Err(SimError::EmptyHoldout);
    }
    Ok(holdout.iter().map(|&d| true_pass_rate(ability, d)).sum::<f64>() / holdout.len() as f64)
}
