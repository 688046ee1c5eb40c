//! Whole-experiment drivers: a single simulated run measured against the
//! plain baseline, and side-by-side strategy comparisons.

use std::io::{self, Write};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::orchestrator::{run_training, StrategyKind};
use crate::runlog::{fmt_sig6, RunLog, RunSummary};

pub const COMPARE_CSV_HEADER: &str =
    "strategy,status,final_val_acc,max_val_acc,steps_to_target,total_rollouts,wasted_rollouts,underfilled_steps,error";
pub const TRACE_CSV_HEADER: &str = "strategy,step,mean_difficulty,val_acc";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("compare needs at least 2 strategies, got {0}")]
    TooFewStrategies(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub log: RunLog,
    /// Plain run with the same config and seed; defines the target accuracy.
    pub baseline: RunLog,
    pub summary: RunSummary,
}

/// Target accuracy: the plain baseline's best validation accuracy over the
/// horizon.
pub fn baseline_target(baseline: &RunLog) -> Option<f64> {
    baseline.max_val_acc()
}

/// Runs the configured strategy and, unless it is already plain, the plain
/// baseline used to define `steps_to_target`.
pub fn simulate(config: &ExperimentConfig) -> Simulation {
    let (log, baseline) = if config.strategy == StrategyKind::Plain {
        let log = run_training(config);
        (log.clone(), log)
    } else {
        let plain_config = config.with_strategy(StrategyKind::Plain);
        std::thread::scope(|s| {
            let baseline = s.spawn(|| run_training(&plain_config));
            let log = run_training(config);
            (log, baseline.join().expect("baseline run panicked"))
        })
    };
    let summary = log.summary(baseline_target(&baseline));
    Simulation { log, baseline, summary }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub strategy: String,
    pub failure: Option<String>,
    pub final_val_acc: Option<f64>,
    pub max_val_acc: Option<f64>,
    pub steps_to_target: Option<u64>,
    pub total_rollouts: usize,
    pub wasted_rollouts: usize,
    pub underfilled_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub target_val_acc: Option<f64>,
    pub rows: Vec<CompareRow>,
    pub logs: Vec<RunLog>,
}

/// Runs every strategy on the same seed and pool. Strategies run in
/// parallel; a failed strategy is reported in its row without affecting
/// the others.
pub fn compare(config: &ExperimentConfig, strategies: &[StrategyKind]) -> Result<Comparison, ExperimentError> {
    if strategies.len() < 2 {
        return Err(ExperimentError::TooFewStrategies(strategies.len()));
    }
    let needs_baseline = !strategies.contains(&StrategyKind::Plain);
    let (logs, baseline) = std::thread::scope(|s| {
        let handles: Vec<_> = strategies
            .iter()
            .map(|&strategy| {
                let cfg = config.with_strategy(strategy);
                s.spawn(move || run_training(&cfg))
            })
            .collect();
        let baseline = needs_baseline.then(|| run_training(&config.with_strategy(StrategyKind::Plain)));
        let logs: Vec<RunLog> = handles.into_iter().map(|h| h.join().expect("strategy run panicked")).collect();
        (logs, baseline)
    });
    let baseline = match baseline {
        Some(b) => b,
        None => {
            let idx = strategies.iter().position(|s| *s == StrategyKind::Plain).expect("plain present");
            logs[idx].clone()
        }
    };
    let target = baseline_target(&baseline);
    let rows = logs
        .iter()
        .map(|log| {
            let s = log.summary(target);
            CompareRow {
                strategy: s.strategy,
                failure: s.failure,
                final_val_acc: s.final_val_acc,
                max_val_acc: s.max_val_acc,
                steps_to_target: s.steps_to_target,
                total_rollouts: s.total_rollouts,
                wasted_rollouts: s.wasted_rollouts,
                underfilled_steps: s.underfilled_steps,
            }
        })
        .collect();
    Ok(Comparison { target_val_acc: target, rows, logs })
}

impl Comparison {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failure.is_some())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let opt = |x: Option<f64>| x.map(fmt_sig6).unwrap_or_default();
        writeln!(out, "{COMPARE_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&r.strategy),
                if r.failure.is_none() { "ok" } else { "failed" },
                opt(r.final_val_acc),
                opt(r.max_val_acc),
                r.steps_to_target.map(|s| s.to_string()).unwrap_or_default(),
                r.total_rollouts,
                r.wasted_rollouts,
                r.underfilled_steps,
                csv_field(r.failure.as_deref().unwrap_or("")),
            )?;
        }
        Ok(())
    }

    /// Per-step batch difficulty and validation accuracy for each strategy,
    /// in long format.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_CSV_HEADER}")?;
        for log in &self.logs {
            let name = csv_field(&log.strategy);
            for s in &log.steps {
                writeln!(out, "{},{},{},{}", name, s.step, fmt_sig6(s.mean_difficulty), fmt_sig6(s.val_acc))?;
            }
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
