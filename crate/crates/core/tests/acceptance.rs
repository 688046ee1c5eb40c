//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test -p learnfilter-core --test acceptance --release`
//! for realistic timings.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use learnfilter_core::bounds::{random_discrete, MAX_DISCRETE_SUPPORT};
use learnfilter_core::experiment::compare;
use learnfilter_core::learnability::{monte_carlo_kl, reverse_kl_via_soft_value};
use learnfilter_core::orchestrator::run_training_with;
use learnfilter_core::reward::Kind;
use learnfilter_core::rng::Purpose;
use learnfilter_core::{
    exact_reverse_kl, group_advantages, run_training, variance_lower_bound, ExecutionMode, ExperimentConfig,
    FilterPolicy, RewardDistribution, RunLog, Seed, StrategyKind, Temperature,
};

const TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

fn temp(beta: f64) -> Temperature {
    Temperature::new(beta).unwrap()
}

fn bern(p: f64) -> RewardDistribution {
    RewardDistribution::bernoulli(p).unwrap()
}

fn endpoint_degeneracy() -> Outcome {
    let mut worst = 0.0f64;
    for beta in [0.5, 1.0, 2.0, 8.0, 64.0] {
        for p in [0.0, 1.0] {
            worst = worst.max(exact_reverse_kl(&bern(p), temp(beta)).unwrap().abs());
        }
    }
    Outcome::new(worst <= TOL, format!("max |kl| = {worst:e}"))
}

fn gaussian_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for sigma in [0.0, 0.5, 1.0, 2.0] {
        for beta in [0.5, 1.0, 4.0] {
            let d = RewardDistribution::gaussian(0.0, sigma).unwrap();
            let kl = exact_reverse_kl(&d, temp(beta)).unwrap();
            worst = worst.max((kl - sigma * sigma / (2.0 * beta * beta)).abs());
        }
    }
    let d = RewardDistribution::gaussian(0.0, 1.0).unwrap();
    let samples = d.sample(&mut Seed(2024).stream(Purpose::Verify, &[2, 0]), 1_000_000);
    let est = monte_carlo_kl(&samples, temp(2.0)).unwrap();
    let z = (est.value - 0.125) / est.std_error;
    Outcome::new(
        worst <= TOL && z.abs() <= 3.0,
        format!("grid max err {worst:e}; MC {:.6} +- {:.6} (z = {z:.2})", est.value, est.std_error),
    )
}

fn cgf_identity() -> Outcome {
    let mut rng = Seed(7).stream(Purpose::Verify, &[1]);
    let mut worst = 0.0f64;
    let mut max_support = 0;
    for case in 0..50 {
        let d = random_discrete(&mut rng);
        if let Kind::Discrete { support, .. } = d.kind() {
            max_support = max_support.max(support.len());
        }
        let t = temp([0.5, 1.0, 2.0, 4.0, 8.0][case % 5]);
        let value_route = d.log_mgf(t.inverse()).unwrap() - d.mean() * t.inverse();
        let cgf_route = d.cgf_centered(t.inverse()).unwrap();
        worst = worst.max((value_route - cgf_route).abs());
        worst = worst.max((reverse_kl_via_soft_value(&d, t).unwrap() - exact_reverse_kl(&d, t).unwrap()).abs());
    }
    Outcome::new(
        worst <= TOL && max_support <= MAX_DISCRETE_SUPPORT,
        format!("max gap {worst:e} over 50 distributions (largest support {max_support})"),
    )
}

fn bound_asymptotics() -> Outcome {
    let mut worst = 0.0f64;
    let mut raw_violations = Vec::new();
    for i in 1..=19 {
        let p = i as f64 * 0.05;
        let d = bern(p);
        let k3 = d.cumulants().kappa3;
        let t = temp(64.0);
        let residual = exact_reverse_kl(&d, t).unwrap() - variance_lower_bound(&d, t);
        worst = worst.max((residual * 64f64.powi(3) - k3 / 6.0).abs());
        if k3 > 0.0 {
            for beta in [8.0, 16.0, 32.0, 64.0, 128.0] {
                let t = temp(beta);
                if exact_reverse_kl(&d, t).unwrap() < variance_lower_bound(&d, t) {
                    raw_violations.push(format!("p={p:.2} beta={beta}"));
                }
            }
        }
    }
    Outcome::new(
        worst <= 5e-3 && raw_violations.is_empty(),
        format!("max |residual*beta^3 - kappa3/6| = {worst:.2e}; raw bound violations: {raw_violations:?}"),
    )
}

fn advantage_contract() -> Outcome {
    let mut rng = Seed(11).stream(Purpose::Verify, &[5]);
    let (mut mixed, mut uniform) = (0, 0);
    let mut worst = 0.0f64;
    let mut uniform_ok = true;
    for _ in 0..1000 {
        let g = rng.random_range(2..=64usize);
        // Mix of arbitrary and constant groups so both branches are exercised.
        let rewards: Vec<f64> = if rng.random_bool(0.2) {
            let v = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            vec![v; g]
        } else {
            let p = rng.random_range(0.0..1.0);
            (0..g).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect()
        };
        let adv = group_advantages(&rewards).unwrap();
        if rewards.iter().all(|&r| r == rewards[0]) {
            uniform += 1;
            uniform_ok &= adv.iter().all(|&a| a == 0.0);
        } else {
            mixed += 1;
            let n = adv.len() as f64;
            let mean = adv.iter().sum::<f64>() / n;
            let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            worst = worst.max(mean.abs()).max((std - 1.0).abs());
        }
    }
    Outcome::new(
        worst <= 1e-10 && uniform_ok,
        format!("{mixed} mixed groups (max err {worst:e}), {uniform} uniform groups all-zero: {uniform_ok}"),
    )
}

fn orchestrator_soundness() -> Outcome {
    let mut rng = Seed(13).stream(Purpose::Verify, &[6]);
    let mut problems = Vec::new();
    let mut full_batches = 0;
    for seed in 0..100u64 {
        let a: f64 = rng.random_range(0.0..0.9);
        let b: f64 = rng.random_range(a + 0.05..=1.0);
        let filter = FilterPolicy::new(a, b, rng.random_bool(0.5), rng.random_bool(0.5)).unwrap();
        let config = ExperimentConfig {
            seed,
            pool_size: 120,
            iterations: 2,
            steps_per_iteration: 4,
            batch_size: rng.random_range(1..=8),
            group_size: rng.random_range(2..=12),
            max_concurrency: rng.random_range(1..=16),
            holdout_size: 32,
            strategy: StrategyKind::Balanced(filter),
            ..Default::default()
        };
        let mut seq_batches = Vec::new();
        let sequential = run_training_with(&config, |out| {
            let batch = &out.batch;
            if !batch.underfilled && batch.len() != config.batch_size {
                problems.push(format!("seed {seed}: batch of {} != N={}", batch.len(), config.batch_size));
            }
            if !batch.underfilled {
                full_batches += 1;
            }
            if let Some(g) = batch.groups.iter().find(|g| !filter.accept(g.pass_rate)) {
                problems.push(format!("seed {seed}: pass rate {} outside {filter}", g.pass_rate));
            }
            if out.stats.max_in_flight > config.max_concurrency {
                problems.push(format!(
                    "seed {seed}: {} in flight > c_max={}",
                    out.stats.max_in_flight, config.max_concurrency
                ));
            }
            seq_batches.push(batch.clone());
        });
        let mut con_batches = Vec::new();
        let concurrent =
            run_training_with(&ExperimentConfig { execution: ExecutionMode::Concurrent, ..config.clone() }, |out| {
                con_batches.push(out.batch.clone())
            });
        if sequential != concurrent || seq_batches != con_batches {
            problems.push(format!("seed {seed}: sequential and concurrent runs differ"));
        }
    }
    problems.truncate(5);
    Outcome::new(problems.is_empty(), format!("{full_batches} full batches checked; problems: {problems:?}"))
}

fn balanced_03_07() -> StrategyKind {
    StrategyKind::balanced(0.3, 0.7).unwrap()
}

fn efficiency() -> Outcome {
    let mut hits = 0;
    let mut steps = Vec::new();
    for seed in 0..10 {
        let config = ExperimentConfig::default().with_seed(seed);
        let plain = run_training(&config);
        let balanced = run_training(&config.with_strategy(balanced_03_07()));
        let target = plain.max_val_acc().expect("plain run has steps");
        let reached = balanced.steps_to_target(target);
        if reached.is_some_and(|s| s <= 120) {
            hits += 1;
        }
        steps.push(reached);
    }
    Outcome::new(hits >= 9, format!("{hits}/10 seeds within 120 steps; steps to target: {steps:?}"))
}

fn in_band_fraction(log: &RunLog) -> f64 {
    let inside = log.steps.iter().filter(|s| (0.25..=0.75).contains(&s.mean_difficulty)).count();
    inside as f64 / log.steps.len() as f64
}

fn difficulty_dynamics() -> Outcome {
    let config = ExperimentConfig::default();
    let balanced = run_training(&config.with_strategy(StrategyKind::balanced(0.2, 0.8).unwrap()));
    let plain = run_training(&config);
    let balanced_frac = in_band_fraction(&balanced);
    // End of training: mean batch difficulty over the last 10 steps.
    let tail = &plain.steps[plain.steps.len() - 10..];
    let plain_end = tail.iter().map(|s| s.mean_difficulty).sum::<f64>() / tail.len() as f64;
    let plain_start = plain.steps[0].mean_difficulty;
    let plain_outside = !(0.25..=0.75).contains(&plain_end);
    Outcome::new(
        balanced.is_ok() && balanced_frac >= 0.95 && plain_outside,
        format!(
            "balanced(0.2,0.8) in band {:.1}% of steps; plain difficulty {plain_start:.3} at step 1, \
             {plain_end:.3} over the last 10 steps (outside band: {plain_outside}), in band {:.1}% of steps",
            100.0 * balanced_frac,
            100.0 * in_band_fraction(&plain)
        ),
    )
}

fn strategy_ordering() -> Outcome {
    let strategies = [balanced_03_07(), StrategyKind::Plain, StrategyKind::skewed(0.0, 0.6).unwrap()];
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..10 {
        let cmp = compare(&ExperimentConfig::default().with_seed(seed), &strategies).unwrap();
        let acc: Vec<f64> = cmp.rows.iter().map(|r| r.final_val_acc.unwrap_or(f64::NAN)).collect();
        if acc[0] >= acc[1] && acc[1] >= acc[2] {
            hits += 1;
        } else {
            misses.push((seed, acc));
        }
    }
    Outcome::new(hits >= 9, format!("{hits}/10 seeds ordered balanced >= plain >= skewed; misses: {misses:?}"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("endpoint degeneracy", Duration::from_secs(1), endpoint_degeneracy),
        ("gaussian exactness", Duration::from_secs(10), gaussian_exactness),
        ("cgf identity", Duration::from_secs(1), cgf_identity),
        ("bound asymptotics", Duration::from_secs(1), bound_asymptotics),
        ("grpo advantage contract", Duration::from_secs(5), advantage_contract),
        ("orchestrator soundness", Duration::from_secs(30), orchestrator_soundness),
        ("efficiency", Duration::from_secs(60), efficiency),
        ("difficulty dynamics", Duration::from_secs(60), difficulty_dynamics),
        ("strategy ordering", Duration::from_secs(120), strategy_ordering),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let passed = outcome.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "{} criterion {} ({name}): {} [{:.2}s / {}s budget]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
