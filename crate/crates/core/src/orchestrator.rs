//! Online difficulty filtering with a fixed batch size.
//!
//! Each training step sorts the pool by visit count and dispatches prompts
//! to rollout jobs, never holding more than `c_max` in flight. As jobs
//! complete, each prompt's visit count is incremented and its group is
//! kept if the empirical pass rate passes the [`FilterPolicy`]. The moment
//! `N` groups are accepted the remaining jobs are cancelled; cancelled jobs
//! leave visit counts untouched and their partial rollouts are discarded.
//!
//! Completion order is decided by a virtual clock: every job has a
//! simulated duration drawn from its own random stream, and the collector
//! always processes the in-flight job with the earliest finish time. Jobs
//! may execute on worker threads ([`ExecutionMode::Concurrent`]) or inline
//! ([`ExecutionMode::Sequential`]); both produce identical results.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::grpo::{categorize, RolloutGroup};
use crate::learnability::{exact_reverse_kl, Temperature};
use crate::reward::RewardDistribution;
use crate::rng::{Purpose, Seed};
use crate::runlog::{RunLog, StepRecord};
use crate::sim::{holdout_difficulties, RolloutJob, SimError, SimPolicy, SimState, TaskPool};

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("pool exhausted: no rollout group passed the filter {filter} after {dispatched} prompts")]
    PoolExhausted { filter: FilterPolicy, dispatched: usize },
    #[error("task pool is empty")]
    EmptyPool,
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid batch spec: {0}")]
    InvalidSpec(String),
    #[error("invalid strategy `{spec}`: {reason}")]
    InvalidStrategy { spec: String, reason: String },
    #[error("offline curation kept no tasks under filter {0}")]
    EmptyCuration(FilterPolicy),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Acceptance interval on the empirical pass rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub t_low: f64,
    pub t_high: f64,
    pub low_inclusive: bool,
    pub high_inclusive: bool,
}

impl FilterPolicy {
    pub fn new(t_low: f64, t_high: f64, low_inclusive: bool, high_inclusive: bool) -> Result<Self, OrchestratorError> {
        if !(0.0..=1.0).contains(&t_low) || !(0.0..=1.0).contains(&t_high) {
            return Err(OrchestratorError::InvalidFilter(format!(
                "thresholds must lie in [0, 1], got ({t_low}, {t_high})"
            )));
        }
        if t_low > t_high {
            return Err(OrchestratorError::InvalidFilter(format!(
                "lower threshold {t_low} exceeds upper threshold {t_high}"
            )));
        }
        Ok(Self { t_low, t_high, low_inclusive, high_inclusive })
    }

    /// `[0, 1]`: accepts everything.
    pub fn plain() -> Self {
        Self { t_low: 0.0, t_high: 1.0, low_inclusive: true, high_inclusive: true }
    }

    /// `(t_low, t_high)`, both bounds strict.
    pub fn strict(t_low: f64, t_high: f64) -> Result<Self, OrchestratorError> {
        Self::new(t_low, t_high, false, false)
    }

    /// One-sided filter: a bound at 0 or 1 is inclusive (trivial), the
    /// other strict. Exactly one bound must be nontrivial.
    pub fn skewed(t_low: f64, t_high: f64) -> Result<Self, OrchestratorError> {
        let low_trivial = t_low == 0.0;
        let high_trivial = t_high == 1.0;
        if low_trivial == high_trivial {
            return Err(OrchestratorError::InvalidFilter(format!(
                "skewed filter needs exactly one nontrivial bound, got ({t_low}, {t_high})"
            )));
        }
        Self::new(t_low, t_high, low_trivial, high_trivial)
    }

    pub fn accept(&self, pass_rate: f64) -> bool {
        let low_ok = if self.low_inclusive { pass_rate >= self.t_low } else { pass_rate > self.t_low };
        let high_ok = if self.high_inclusive { pass_rate <= self.t_high } else { pass_rate < self.t_high };
        low_ok && high_ok
    }

    fn bracket_code(&self) -> &'static str {
        match (self.low_inclusive, self.high_inclusive) {
            (true, true) => "[]",
            (true, false) => "[)",
            (false, true) => "(]",
            (false, false) => "()",
        }
    }
}

impl fmt::Display for FilterPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = self.bracket_code();
        write!(f, "{}{}, {}{}", &code[..1], self.t_low, self.t_high, &code[1..])
    }
}

/// Batch size `N`, group size `G`, and concurrency cap `c_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub batch_size: usize,
    pub group_size: usize,
    pub max_concurrency: usize,
}

impl BatchSpec {
    pub fn new(batch_size: usize, group_size: usize, max_concurrency: usize) -> Result<Self, OrchestratorError> {
        if batch_size < 1 {
            return Err(OrchestratorError::InvalidSpec("batch size must be >= 1".into()));
        }
        if group_size < 2 {
            return Err(OrchestratorError::InvalidSpec("group size must be >= 2".into()));
        }
        if max_concurrency < 1 {
            return Err(OrchestratorError::InvalidSpec("max concurrency must be >= 1".into()));
        }
        Ok(Self { batch_size, group_size, max_concurrency })
    }
}

/// Groups accepted for one training step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainBatch {
    pub groups: Vec<RolloutGroup>,
    /// Set when the pool ran out before `N` groups were accepted.
    pub underfilled: bool,
    pub step: u64,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn mean_pass_rate(&self) -> f64 {
        if self.groups.is_empty() {
            return 0.0;
        }
        self.groups.iter().map(|g| g.pass_rate).sum::<f64>() / self.groups.len() as f64
    }
}

/// Training data strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyKind {
    /// No filtering.
    Plain,
    /// Online filtering on a two-sided interval.
    Balanced(FilterPolicy),
    /// Online filtering on one side only.
    Skewed(FilterPolicy),
    /// One-time pre-training filter under a frozen proxy, then plain training.
    OfflineCuration { filter: FilterPolicy, proxy_ability: f64 },
    /// Easy-to-hard static ordering under a frozen proxy, consumed sequentially.
    OfflineSchedule { proxy_ability: f64 },
}

impl StrategyKind {
    /// The filter applied online at every step.
    pub fn online_filter(&self) -> FilterPolicy {
        match self {
            StrategyKind::Balanced(f) | StrategyKind::Skewed(f) => *f,
            _ => FilterPolicy::plain(),
        }
    }

    pub fn dispatch_order(&self) -> DispatchOrder {
        match self {
            StrategyKind::OfflineSchedule { .. } => DispatchOrder::PoolOrder,
            _ => DispatchOrder::Shuffled,
        }
    }

    /// `balanced:0.3:0.7`-style spec for a two-sided filter.
    pub fn balanced(t_low: f64, t_high: f64) -> Result<Self, OrchestratorError> {
        Ok(StrategyKind::Balanced(FilterPolicy::strict(t_low, t_high)?))
    }

    pub fn skewed(t_low: f64, t_high: f64) -> Result<Self, OrchestratorError> {
        Ok(StrategyKind::Skewed(FilterPolicy::skewed(t_low, t_high)?))
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = |fp: &FilterPolicy, default: &str| {
            let code = fp.bracket_code();
            if code == default {
                String::new()
            } else {
                format!(":{code}")
            }
        };
        match self {
            StrategyKind::Plain => f.write_str("plain"),
            StrategyKind::Balanced(fp) => {
                write!(f, "balanced:{}:{}{}", fp.t_low, fp.t_high, suffix(fp, "()"))
            }
            StrategyKind::Skewed(fp) => write!(f, "skewed:{}:{}", fp.t_low, fp.t_high),
            StrategyKind::OfflineCuration { filter, proxy_ability } => {
                write!(f, "curate:{}:{}:{}{}", filter.t_low, filter.t_high, proxy_ability, suffix(filter, "()"))
            }
            StrategyKind::OfflineSchedule { proxy_ability } => write!(f, "schedule:{proxy_ability}"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = OrchestratorError;

    /// Grammar: `plain`, `balanced:<low>:<high>[:<br>]`, `skewed:<low>:<high>`,
    /// `curate:<low>:<high>:<proxy-ability>[:<br>]`, `schedule:<proxy-ability>`,
    /// where the optional `<br>` is one of `()`, `[]`, `[)`, `(]` and sets
    /// bound inclusivity (default `()`).
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let invalid =
            |reason: &str| OrchestratorError::InvalidStrategy { spec: spec.to_string(), reason: reason.to_string() };
        let wrap = |e: OrchestratorError| invalid(&e.to_string());
        let parts: Vec<&str> = spec.trim().split(':').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| invalid(&format!("`{s}` is not a number")));
        let brackets = |code: Option<&&str>| -> Result<(bool, bool), OrchestratorError> {
            match code.copied() {
                None | Some("()") => Ok((false, false)),
                Some("[]") => Ok((true, true)),
                Some("[)") => Ok((true, false)),
                Some("(]") => Ok((false, true)),
                Some(other) => Err(invalid(&format!("unknown bound code `{other}`"))),
            }
        };
        match parts.as_slice() {
            ["plain"] => Ok(StrategyKind::Plain),
            ["balanced", lo, hi, rest @ ..] if rest.len() <= 1 => {
                let (li, hi_inc) = brackets(rest.first())?;
                Ok(StrategyKind::Balanced(FilterPolicy::new(num(lo)?, num(hi)?, li, hi_inc).map_err(wrap)?))
            }
            ["skewed", lo, hi] => Ok(StrategyKind::Skewed(FilterPolicy::skewed(num(lo)?, num(hi)?).map_err(wrap)?)),
            ["curate", lo, hi, ability, rest @ ..] if rest.len() <= 1 => {
                let (li, hi_inc) = brackets(rest.first())?;
                let proxy_ability = num(ability)?;
                if proxy_ability.is_nan() {
                    return Err(invalid("proxy ability is NaN"));
                }
                Ok(StrategyKind::OfflineCuration {
                    filter: FilterPolicy::new(num(lo)?, num(hi)?, li, hi_inc).map_err(wrap)?,
                    proxy_ability,
                })
            }
            ["schedule", ability] => {
                let proxy_ability = num(ability)?;
                if proxy_ability.is_nan() {
                    return Err(invalid("proxy ability is NaN"));
                }
                Ok(StrategyKind::OfflineSchedule { proxy_ability })
            }
            _ => Err(invalid(
                "expected plain | balanced:<low>:<high> | skewed:<low>:<high> | \
                 curate:<low>:<high>:<proxy-ability> | schedule:<proxy-ability>",
            )),
        }
    }
}

/// How ties among equal visit counts are broken when building the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchOrder {
    /// Seeded shuffle per step, then stable sort by visit count.
    Shuffled,
    /// Stable sort by visit count, keeping pool order among ties.
    PoolOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExecutionMode {
    #[default]
    Sequential,
    Concurrent,
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutionMode::Sequential => "sequential",
            ExecutionMode::Concurrent => "concurrent",
        })
    }
}

impl FromStr for ExecutionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(ExecutionMode::Sequential),
            "concurrent" => Ok(ExecutionMode::Concurrent),
            other => Err(format!("unknown execution mode `{other}` (expected `sequential` or `concurrent`)")),
        }
    }
}

/// Counters for one call to [`fill_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FillStats {
    pub dispatched: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub cancelled: usize,
    /// Rollouts generated, including the partial work of cancelled jobs.
    pub rollouts: usize,
    /// Rollouts in rejected groups and cancelled jobs.
    pub wasted_rollouts: usize,
    pub max_in_flight: usize,
}

/// A prompt handed to a rollout job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dispatch {
    pub task_index: usize,
    pub visit_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillOutcome {
    pub batch: TrainBatch,
    pub stats: FillStats,
    pub rejected_pass_rates: Vec<f64>,
    pub dispatches: Vec<Dispatch>,
}

/// Prompt queue for the current step: ascending visit count.
pub fn dispatch_queue(state: &SimState, order: DispatchOrder) -> Vec<usize> {
    let mut queue: Vec<usize> = (0..state.pool.len()).collect();
    if order == DispatchOrder::Shuffled {
        let mut rng = state.seed.stream(Purpose::DispatchOrder, &[state.step]);
        queue.shuffle(&mut rng);
    }
    queue.sort_by_key(|&i| state.pool.visit_count(i));
    queue
}

trait JobRunner {
    fn submit(&mut self, id: usize, job: RolloutJob);
    fn collect(&mut self, id: usize) -> RolloutGroup;
    fn cancel(&mut self, id: usize);
}

#[derive(Default)]
struct InlineRunner {
    pending: HashMap<usize, RolloutJob>,
}

impl JobRunner for InlineRunner {
    fn submit(&mut self, id: usize, job: RolloutJob) {
        self.pending.insert(id, job);
    }

    fn collect(&mut self, id: usize) -> RolloutGroup {
        self.pending.remove(&id).expect("collected job was submitted").run()
    }

    fn cancel(&mut self, id: usize) {
        self.pending.remove(&id);
    }
}

type WorkItem = (usize, RolloutJob, Arc<AtomicBool>);

struct ThreadRunner {
    jobs: crossbeam_channel::Sender<WorkItem>,
    results: crossbeam_channel::Receiver<(usize, RolloutGroup)>,
    cancel_flags: HashMap<usize, Arc<AtomicBool>>,
    ready: HashMap<usize, RolloutGroup>,
}

impl JobRunner for ThreadRunner {
    fn submit(&mut self, id: usize, job: RolloutJob) {
        let flag = Arc::new(AtomicBool::new(false));
        self.cancel_flags.insert(id, flag.clone());
        self.jobs.send((id, job, flag)).expect("workers alive while runner exists");
    }

    fn collect(&mut self, id: usize) -> RolloutGroup {
        self.cancel_flags.remove(&id);
        loop {
            if let Some(group) = self.ready.remove(&id) {
                return group;
            }
            let (done, group) = self.results.recv().expect("a worker holds the submitted job");
            // Results for cancelled jobs are dropped.
            if done == id || self.cancel_flags.contains_key(&done) {
                self.ready.insert(done, group);
            }
        }
    }

    fn cancel(&mut self, id: usize) {
        if let Some(flag) = self.cancel_flags.remove(&id) {
            flag.store(true, Ordering::Release);
        }
        self.ready.remove(&id);
    }
}

struct InFlight {
    id: usize,
    task_index: usize,
    start: f64,
    finish: f64,
}

/// Fills one training batch (see the module docs for the protocol).
///
/// Visit counts in `state.pool` are updated for every completed job. If the
/// whole pool is dispatched and fewer than `N` groups pass, the partial
/// batch is returned with `underfilled` set; with zero accepted groups the
/// call fails with [`OrchestratorError::PoolExhausted`].
pub fn fill_batch(
    state: &mut SimState,
    spec: &BatchSpec,
    filter: &FilterPolicy,
    order: DispatchOrder,
    mode: ExecutionMode,
) -> Result<FillOutcome, OrchestratorError> {
    if state.pool.is_empty() {
        return Err(OrchestratorError::EmptyPool);
    }
    match mode {
        ExecutionMode::Sequential => run_event_loop(state, spec, filter, order, &mut InlineRunner::default()),
        ExecutionMode::Concurrent => {
            let workers = spec.max_concurrency.min(std::thread::available_parallelism().map_or(4, |n| n.get())).max(1);
            std::thread::scope(|scope| {
                let (job_tx, job_rx) = crossbeam_channel::unbounded::<WorkItem>();
                let (res_tx, res_rx) = crossbeam_channel::unbounded();
                for _ in 0..workers {
                    let job_rx = job_rx.clone();
                    let res_tx = res_tx.clone();
                    scope.spawn(move || {
                        for (id, job, cancelled) in job_rx {
                            if cancelled.load(Ordering::Acquire) {
                                continue;
                            }
                            let group = job.run();
                            if res_tx.send((id, group)).is_err() {
                                break;
                            }
                        }
                    });
                }
                drop(res_tx);
                let mut runner =
                    ThreadRunner { jobs: job_tx, results: res_rx, cancel_flags: HashMap::new(), ready: HashMap::new() };
                let out = run_event_loop(state, spec, filter, order, &mut runner);
                for flag in runner.cancel_flags.values() {
                    flag.store(true, Ordering::Release);
                }
                drop(runner);
                out
            })
        }
    }
}

fn run_event_loop<R: JobRunner>(
    state: &mut SimState,
    spec: &BatchSpec,
    filter: &FilterPolicy,
    order: DispatchOrder,
    runner: &mut R,
) -> Result<FillOutcome, OrchestratorError> {
    let g = spec.group_size;
    let mut queue = dispatch_queue(state, order).into_iter();
    let mut in_flight: Vec<InFlight> = Vec::with_capacity(spec.max_concurrency);
    let mut accepted: Vec<RolloutGroup> = Vec::with_capacity(spec.batch_size);
    let mut rejected_pass_rates = Vec::new();
    let mut dispatches = Vec::new();
    let mut stats = FillStats::default();
    let mut now = 0.0_f64;

    loop {
        while in_flight.len() < spec.max_concurrency {
            let Some(task_index) = queue.next() else { break };
            let job = state.prepare_rollout(task_index, g)?;
            let duration = state.job_duration(task_index);
            let id = stats.dispatched;
            dispatches.push(Dispatch { task_index, visit_count: state.pool.visit_count(task_index) });
            runner.submit(id, job);
            in_flight.push(InFlight { id, task_index, start: now, finish: now + duration });
            stats.dispatched += 1;
        }
        stats.max_in_flight = stats.max_in_flight.max(in_flight.len());

        let Some(next) = in_flight
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.finish.total_cmp(&b.finish).then(a.id.cmp(&b.id)))
            .map(|(pos, _)| pos)
        else {
            break;
        };
        let job = in_flight.swap_remove(next);
        now = job.finish;
        let group = runner.collect(job.id);
        state.pool.record_visit(job.task_index);
        stats.rollouts += g;

        if filter.accept(group.pass_rate) {
            accepted.push(group);
            stats.accepted += 1;
            if accepted.len() == spec.batch_size {
                for job in in_flight.drain(..) {
                    runner.cancel(job.id);
                    let done = ((now - job.start) / (job.finish - job.start) * g as f64).floor() as usize;
                    let partial = done.min(g - 1);
                    stats.cancelled += 1;
                    stats.rollouts += partial;
                    stats.wasted_rollouts += partial;
                }
                break;
            }
        } else {
            rejected_pass_rates.push(group.pass_rate);
            stats.rejected += 1;
            stats.wasted_rollouts += g;
        }
    }

    if accepted.is_empty() {
        return Err(OrchestratorError::PoolExhausted { filter: *filter, dispatched: stats.dispatched });
    }
    let underfilled = accepted.len() < spec.batch_size;
    Ok(FillOutcome {
        batch: TrainBatch { groups: accepted, underfilled, step: state.step },
        stats,
        rejected_pass_rates,
        dispatches,
    })
}

/// Empirical pass rate of every task under a frozen proxy, `G` rollouts
/// each, from the proxy's own streams.
pub fn proxy_pass_rates(pool: &TaskPool, proxy: &SimPolicy, group_size: usize, seed: Seed) -> Vec<f64> {
    pool.tasks()
        .iter()
        .map(|task| {
            let p = proxy.true_pass_rate(task.difficulty);
            let mut rng = seed.stream(Purpose::Proxy, &[task.key()]);
            let hits = (0..group_size).filter(|_| rng.random::<f64>() < p).count();
            hits as f64 / group_size as f64
        })
        .collect()
}

/// Keeps the tasks whose proxy pass rate passes `filter`, in pool order.
pub fn offline_curation(
    pool: &TaskPool,
    proxy: &SimPolicy,
    filter: &FilterPolicy,
    group_size: usize,
    seed: Seed,
) -> Result<TaskPool, OrchestratorError> {
    if group_size < 2 {
        return Err(OrchestratorError::InvalidSpec("group size must be >= 2".into()));
    }
    let rates = proxy_pass_rates(pool, proxy, group_size, seed);
    let keep: Vec<usize> = rates.iter().enumerate().filter(|(_, &p)| filter.accept(p)).map(|(i, _)| i).collect();
    if keep.is_empty() {
        return Err(OrchestratorError::EmptyCuration(*filter));
    }
    Ok(pool.select(&keep))
}

/// Reorders the pool by descending proxy pass rate (easy first); ties keep
/// pool order.
pub fn offline_schedule(
    pool: &TaskPool,
    proxy: &SimPolicy,
    group_size: usize,
    seed: Seed,
) -> Result<TaskPool, OrchestratorError> {
    if group_size < 2 {
        return Err(OrchestratorError::InvalidSpec("group size must be >= 2".into()));
    }
    let rates = proxy_pass_rates(pool, proxy, group_size, seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| rates[b].total_cmp(&rates[a]));
    Ok(pool.select(&order))
}

struct Run {
    state: SimState,
    holdout: Vec<f64>,
    spec: BatchSpec,
    filter: FilterPolicy,
    order: DispatchOrder,
}

fn prepare_run(config: &ExperimentConfig) -> Result<Run, OrchestratorError> {
    let seed = Seed(config.seed);
    let spec = BatchSpec::new(config.batch_size, config.group_size, config.max_concurrency)?;
    let mut pool = config.load_pool()?;
    let strategy = config.strategy;
    match strategy {
        StrategyKind::OfflineCuration { filter, proxy_ability } => {
            pool = offline_curation(&pool, &SimPolicy::proxy(proxy_ability), &filter, spec.group_size, seed)?;
        }
        StrategyKind::OfflineSchedule { proxy_ability } => {
            pool = offline_schedule(&pool, &SimPolicy::proxy(proxy_ability), spec.group_size, seed)?;
        }
        _ => {}
    }
    let policy = SimPolicy::new(config.initial_ability, config.eta, config.dynamics)?;
    let holdout = holdout_difficulties(config.holdout_size, config.difficulty_mean, config.difficulty_std, seed)?;
    Ok(Run {
        state: SimState::new(pool, policy, seed),
        holdout,
        spec,
        filter: strategy.online_filter(),
        order: strategy.dispatch_order(),
    })
}

/// Runs `iterations × steps_per_iteration` filtered GRPO steps on the
/// simulator and records per-step metrics. Errors stop the run and are
/// recorded in [`RunLog::failure`] alongside the steps completed so far.
pub fn run_training(config: &ExperimentConfig) -> RunLog {
    run_training_with(config, |_| {})
}

/// [`run_training`] with a hook that sees every step's [`FillOutcome`].
pub fn run_training_with<F>(config: &ExperimentConfig, mut observe: F) -> RunLog
where
    F: FnMut(&FillOutcome),
{
    let mut log = RunLog::new(config.strategy.to_string(), config.seed);
    if config.total_steps() == 0 {
        return log;
    }
    let mut run = match prepare_run(config) {
        Ok(run) => run,
        Err(e) => {
            log.failure = Some(e.to_string());
            return log;
        }
    };
    let temp = Temperature::new(config.beta).unwrap_or_default();
    let mut rollouts_total = 0usize;
    let mut wasted_total = 0usize;

    for iteration in 0..config.iterations {
        // New reference policy: visit counts start over.
        run.state.pool.reset_visits();
        for k in 0..config.steps_per_iteration {
            let outcome = match fill_batch(&mut run.state, &run.spec, &run.filter, run.order, config.execution) {
                Ok(o) => o,
                Err(e) => {
                    log.failure = Some(e.to_string());
                    return log;
                }
            };
            observe(&outcome);
            if let Err(e) = run.state.apply_update(&outcome.batch) {
                log.failure = Some(e.to_string());
                return log;
            }
            rollouts_total += outcome.stats.rollouts;
            wasted_total += outcome.stats.wasted_rollouts;
            let val_acc = run.state.validation_accuracy(&run.holdout).unwrap_or(f64::NAN);
            log.push(step_record(
                &run.state,
                &outcome,
                iteration,
                k == 0,
                val_acc,
                rollouts_total,
                wasted_total,
                config.epsilon,
                temp,
            ));
        }
    }
    log
}

#[allow(clippy::too_many_arguments)]
fn step_record(
    state: &SimState,
    outcome: &FillOutcome,
    iteration: u64,
    reference_reset: bool,
    val_acc: f64,
    rollouts_total: usize,
    wasted_total: usize,
    epsilon: f64,
    temp: Temperature,
) -> StepRecord {
    let batch = &outcome.batch;
    let mean_pass = batch.mean_pass_rate();
    let mut categories = [0usize; 5];
    let mut kl_sum = 0.0;
    for g in &batch.groups {
        if let Ok(c) = categorize(g.pass_rate, epsilon) {
            categories[c.category.index()] += 1;
        }
        if let Ok(d) = RewardDistribution::bernoulli(g.pass_rate) {
            kl_sum += exact_reverse_kl(&d, temp).unwrap_or(0.0);
        }
    }
    StepRecord {
        step: state.step,
        iteration: iteration + 1,
        ability: state.policy.ability,
        val_acc,
        mean_pass,
        mean_difficulty: 1.0 - mean_pass,
        accepted: outcome.stats.accepted,
        rejected: outcome.stats.rejected,
        cancelled: outcome.stats.cancelled,
        rollouts: rollouts_total,
        wasted_rollouts: wasted_total,
        underfilled: batch.underfilled,
        reference_reset,
        max_in_flight: outcome.stats.max_in_flight,
        uninformative_groups: batch.groups.iter().filter(|g| g.is_uninformative()).count(),
        mean_kl: kl_sum / batch.groups.len().max(1) as f64,
        categories,
        visit_histogram: state.pool.visit_histogram(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Dynamics, Task};

    fn pool_state(difficulties: &[f64], seed: u64) -> SimState {
        let tasks = difficulties.iter().enumerate().map(|(i, &d)| Task::new(format!("t{i}"), d)).collect();
        SimState::new(
            TaskPool::new(tasks).unwrap(),
            SimPolicy::new(0.0, 0.05, Dynamics::VarianceDriven).unwrap(),
            Seed(seed),
        )
    }

    #[test]
    fn filter_predicates() {
        let strict = FilterPolicy::strict(0.2, 0.8).unwrap();
        assert!(!strict.accept(0.2) && strict.accept(0.5) && !strict.accept(0.8));
        let closed = FilterPolicy::new(0.2, 0.8, true, true).unwrap();
        assert!(closed.accept(0.2) && closed.accept(0.8));
        let plain = FilterPolicy::plain();
        assert!(plain.accept(0.0) && plain.accept(1.0));
        let open01 = FilterPolicy::strict(0.0, 1.0).unwrap();
        assert!(!open01.accept(0.0) && open01.accept(0.5) && !open01.accept(1.0));
        assert!(FilterPolicy::new(0.8, 0.2, false, false).is_err());
        assert!(FilterPolicy::new(-0.1, 0.2, false, false).is_err());
        assert_eq!(strict.to_string(), "(0.2, 0.8)");
        assert_eq!(plain.to_string(), "[0, 1]");
    }

    #[test]
    fn skewed_needs_exactly_one_bound() {
        let s = FilterPolicy::skewed(0.0, 0.6).unwrap();
        assert!(s.accept(0.0) && !s.accept(0.6) && s.accept(0.59));
        let s = FilterPolicy::skewed(0.4, 1.0).unwrap();
        assert!(s.accept(1.0) && !s.accept(0.4));
        assert!(FilterPolicy::skewed(0.0, 1.0).is_err());
        assert!(FilterPolicy::skewed(0.2, 0.8).is_err());
    }

    #[test]
    fn strategy_grammar_round_trips() {
        for spec in [
            "plain",
            "balanced:0.3:0.7",
            "balanced:0:1:[]",
            "balanced:0.2:0.8:[)",
            "skewed:0:0.6",
            "skewed:0.4:1",
            "curate:0.2:0.8:-2",
            "curate:0:1:inf:[]",
            "schedule:-1.5",
        ] {
            let parsed: StrategyKind = spec.parse().unwrap();
            assert_eq!(parsed.to_string(), spec);
            assert_eq!(parsed.to_string().parse::<StrategyKind>().unwrap(), parsed);
        }
        for bad in [
            "",
            "balanced:0.3",
            "balanced:0.7:0.3",
            "skewed:0.2:0.8",
            "curate:0:1",
            "schedule:x",
            "balanced:0:1:<>",
            "greedy",
        ] {
            assert!(bad.parse::<StrategyKind>().is_err(), "{bad}");
        }
    }

    #[test]
    fn extremes_are_filtered_out() {
        // True pass rates {1, 0.5, 0.5, 0} with ability 0.
        let mut s = pool_state(&[f64::NEG_INFINITY, 0.0, 0.0, f64::INFINITY], 5);
        let spec = BatchSpec::new(2, 4096, 4).unwrap();
        let filter = FilterPolicy::strict(0.2, 0.8).unwrap();
        let out = fill_batch(&mut s, &spec, &filter, DispatchOrder::Shuffled, ExecutionMode::Sequential).unwrap();
        let mut ids: Vec<_> = out.batch.groups.iter().map(|g| g.prompt_id.to_string()).collect();
        ids.sort();
        assert_eq!(ids, vec!["t1", "t2"]);
        assert!(!out.batch.underfilled);
    }

    #[test]
    fn plain_takes_every_task() {
        let mut s = pool_state(&[0.0, 1.0, 2.0, 3.0], 5);
        let spec = BatchSpec::new(4, 8, 2).unwrap();
        let out = fill_batch(&mut s, &spec, &FilterPolicy::plain(), DispatchOrder::Shuffled, ExecutionMode::Sequential)
            .unwrap();
        assert_eq!(out.batch.len(), 4);
        assert_eq!(out.stats.rejected, 0);
        assert_eq!(out.stats.cancelled, 0);
        assert_eq!(s.pool.visit_counts(), &[1, 1, 1, 1]);
        assert!(out.dispatches.iter().all(|d| d.visit_count == 0));
    }

    #[test]
    fn impossible_filter_exhausts_pool() {
        let mut s = pool_state(&[f64::NEG_INFINITY; 3], 5);
        let spec = BatchSpec::new(2, 8, 2).unwrap();
        let filter = FilterPolicy::strict(0.4, 0.6).unwrap();
        let err = fill_batch(&mut s, &spec, &filter, DispatchOrder::Shuffled, ExecutionMode::Sequential).unwrap_err();
        assert!(err.to_string().contains("(0.4, 0.6)"), "{err}");
        // Every prompt was completed and counted.
        assert_eq!(s.pool.visit_counts(), &[1, 1, 1]);
    }

    #[test]
    fn partial_batch_is_flagged_underfilled() {
        let mut s = pool_state(&[0.0, f64::INFINITY, f64::INFINITY], 5);
        let spec = BatchSpec::new(2, 64, 3).unwrap();
        let filter = FilterPolicy::strict(0.2, 0.8).unwrap();
        let out = fill_batch(&mut s, &spec, &filter, DispatchOrder::Shuffled, ExecutionMode::Sequential).unwrap();
        assert!(out.batch.underfilled);
        assert_eq!(out.batch.len(), 1);
        assert_eq!(out.stats.rejected, 2);
    }

    #[test]
    fn cancelled_jobs_do_not_count_as_visits() {
        let mut s = pool_state(&[0.0; 20], 9);
        let spec = BatchSpec::new(3, 4, 10).unwrap();
        let out = fill_batch(&mut s, &spec, &FilterPolicy::plain(), DispatchOrder::Shuffled, ExecutionMode::Sequential)
            .unwrap();
        // 10 up front, one refill after each of the first two completions.
        assert_eq!(out.stats.dispatched, 12);
        assert_eq!(out.stats.cancelled, 9);
        assert_eq!(s.pool.visit_counts().iter().sum::<u32>(), 3);
        assert!(out.stats.max_in_flight <= 10);
    }

    #[test]
    fn least_visited_prompts_go_first() {
        let mut s = pool_state(&[0.0; 6], 2);
        s.pool.record_visit(0);
        s.pool.record_visit(1);
        s.pool.record_visit(1);
        let spec = BatchSpec::new(6, 4, 1).unwrap();
        let out = fill_batch(&mut s, &spec, &FilterPolicy::plain(), DispatchOrder::Shuffled, ExecutionMode::Sequential)
            .unwrap();
        let order: Vec<usize> = out.dispatches.iter().map(|d| d.task_index).collect();
        assert_eq!(&order[4..], &[0, 1]);
    }

    #[test]
    fn concurrent_matches_sequential() {
        let difficulties: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) / 8.0).collect();
        let spec = BatchSpec::new(5, 8, 6).unwrap();
        let filter = FilterPolicy::strict(0.2, 0.8).unwrap();
        let mut a = pool_state(&difficulties, 17);
        let mut b = a.clone();
        for _ in 0..4 {
            let x = fill_batch(&mut a, &spec, &filter, DispatchOrder::Shuffled, ExecutionMode::Sequential).unwrap();
            let y = fill_batch(&mut b, &spec, &filter, DispatchOrder::Shuffled, ExecutionMode::Concurrent).unwrap();
            assert_eq!(x, y);
            a.apply_update(&x.batch).unwrap();
            b.apply_update(&y.batch).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn curation_examples() {
        let pool =
            TaskPool::new((0..30).map(|i| Task::new(format!("t{i}"), (i as f64 - 15.0) / 5.0)).collect()).unwrap();
        let seed = Seed(4);
        let saturated = SimPolicy::proxy(f64::INFINITY);
        let balanced = FilterPolicy::strict(0.2, 0.8).unwrap();
        assert!(matches!(
            offline_curation(&pool, &saturated, &balanced, 8, seed),
            Err(OrchestratorError::EmptyCuration(_))
        ));
        let proxy = SimPolicy::proxy(0.0);
        let kept = offline_curation(&pool, &proxy, &balanced, 8, seed).unwrap();
        let rates = proxy_pass_rates(&pool, &proxy, 8, seed);
        assert!(!kept.is_empty() && kept.len() < pool.len());
        for task in kept.tasks() {
            let i = pool.index_of(&task.id).unwrap();
            assert!(rates[i] > 0.2 && rates[i] < 0.8);
        }
        let all = offline_curation(&pool, &proxy, &FilterPolicy::plain(), 8, seed).unwrap();
        assert_eq!(all, pool);
    }

    #[test]
    fn schedule_examples() {
        // Proxy pass rates ~0.9, ~0.1, ~0.5 via large G.
        let l9 = 9f64.ln();
        let pool = TaskPool::new(vec![Task::new("a", -l9), Task::new("b", l9), Task::new("c", 0.0)]).unwrap();
        let proxy = SimPolicy::proxy(0.0);
        let sched = offline_schedule(&pool, &proxy, 4096, Seed(1)).unwrap();
        let ids: Vec<&str> = sched.tasks().iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c", "b"]);

        let same = TaskPool::new((0..5).map(|i| Task::new(format!("s{i}"), f64::NEG_INFINITY)).collect()).unwrap();
        assert_eq!(offline_schedule(&same, &proxy, 8, Seed(1)).unwrap(), same);
        let single = TaskPool::new(vec![Task::new("only", 0.3)]).unwrap();
        assert_eq!(offline_schedule(&single, &proxy, 8, Seed(1)).unwrap(), single);
    }
}
