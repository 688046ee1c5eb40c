//! Per-step training metrics and their CSV / JSON exports.

use std::io::{self, Write};

use serde::Serialize;

/// Header of `run.csv`. Column order is fixed.
pub const RUN_CSV_HEADER: &str =
    "step,iteration,ability,val_acc,mean_pass,mean_difficulty,accepted,rejected,cancelled,rollouts,underfilled";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// 1-based global step.
    pub step: u64,
    /// 1-based outer iteration.
    pub iteration: u64,
    /// Ability after this step's update.
    pub ability: f64,
    pub val_acc: f64,
    /// Mean empirical pass rate of the accepted groups.
    pub mean_pass: f64,
    /// `1 - mean_pass`.
    pub mean_difficulty: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub cancelled: usize,
    /// Cumulative rollouts generated through this step.
    pub rollouts: usize,
    /// Cumulative rollouts spent on rejected or cancelled jobs.
    pub wasted_rollouts: usize,
    pub underfilled: bool,
    /// First step of an iteration (reference policy reset, visit counts cleared).
    pub reference_reset: bool,
    pub max_in_flight: usize,
    /// Accepted groups whose advantages are all zero.
    pub uninformative_groups: usize,
    /// Mean exact reverse KL of the accepted groups at the configured β.
    pub mean_kl: f64,
    /// Accepted groups per difficulty category, hard to easy.
    pub categories: [usize; 5],
    pub visit_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub strategy: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Why the run stopped early, if it did.
    pub failure: Option<String>,
}

impl RunLog {
    pub fn new(strategy: String, seed: u64) -> Self {
        Self { strategy, seed, steps: Vec::new(), failure: None }
    }

    pub fn push(&mut self, record: StepRecord) {
        debug_assert!(self.steps.last().is_none_or(|last| last.step < record.step));
        self.steps.push(record);
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_val_acc(&self) -> Option<f64> {
        self.steps.last().map(|s| s.val_acc)
    }

    pub fn max_val_acc(&self) -> Option<f64> {
        self.steps.iter().map(|s| s.val_acc).reduce(f64::max)
    }

    /// First step whose validation accuracy reaches `target`.
    pub fn steps_to_target(&self, target: f64) -> Option<u64> {
        self.steps.iter().find(|s| s.val_acc >= target).map(|s| s.step)
    }

    pub fn total_rollouts(&self) -> usize {
        self.steps.last().map_or(0, |s| s.rollouts)
    }

    pub fn wasted_rollouts(&self) -> usize {
        self.steps.last().map_or(0, |s| s.wasted_rollouts)
    }

    pub fn underfilled_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.underfilled).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{RUN_CSV_HEADER}")?;
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.step,
                s.iteration,
                fmt_sig6(s.ability),
                fmt_sig6(s.val_acc),
                fmt_sig6(s.mean_pass),
                fmt_sig6(s.mean_difficulty),
                s.accepted,
                s.rejected,
                s.cancelled,
                s.rollouts,
                u8::from(s.underfilled),
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    /// Summary against a target accuracy (normally the plain baseline's
    /// maximum over the same horizon).
    pub fn summary(&self, target_val_acc: Option<f64>) -> RunSummary {
        RunSummary {
            strategy: self.strategy.clone(),
            seed: self.seed,
            steps: self.steps.len(),
            final_ability: self.steps.last().map(|s| s.ability),
            final_val_acc: self.final_val_acc(),
            max_val_acc: self.max_val_acc(),
            target_val_acc,
            steps_to_target: target_val_acc.and_then(|t| self.steps_to_target(t)),
            total_rollouts: self.total_rollouts(),
            wasted_rollouts: self.wasted_rollouts(),
            underfilled_steps: self.underfilled_steps(),
            failure: self.failure.clone(),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub steps: usize,
    pub final_ability: Option<f64>,
    pub final_val_acc: Option<f64>,
    pub max_val_acc: Option<f64>,
    pub target_val_acc: Option<f64>,
    pub steps_to_target: Option<u64>,
    pub total_rollouts: usize,
    pub wasted_rollouts: usize,
    pub underfilled_steps: usize,
    pub failure: Option<String>,
}

/// Six significant digits in the style of C's `%.6g`: fixed notation for
/// decimal exponents in `[-4, 6)`, scientific otherwise, trailing zeros
/// trimmed. Independent of locale.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round to 6 significant digits first; the exponent after rounding
    // decides the notation.
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("`e` formatting has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
