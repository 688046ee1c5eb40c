use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use learnfilter_core::bounds::{verify_bounds, BoundsConfig};
use learnfilter_core::experiment::{compare, simulate};
use learnfilter_core::{ExperimentConfig, StrategyKind};

#[derive(Parser)]
#[command(name = "learnfilter", version, about = "Learnability checks and online difficulty filtering simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training simulation; writes run.csv and summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's output_path).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the learnability identities and bounds; writes a JSON report.
    VerifyBounds {
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long = "p-grid", value_delimiter = ',')]
        p_grid: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "bounds_report.json")]
        out: PathBuf,
    },
    /// Run several strategies on the same seed and pool; writes compare.csv
    /// and difficulty_trace.csv.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated strategy specs, e.g. `plain,balanced:0.3:0.7`.
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit status with the message to print on stderr.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Runtime(format!("cannot write {}: {e}", path.display()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed, out } => cmd_simulate(&config, seed, out),
        Command::VerifyBounds { betas, p_grid, samples, out } => cmd_verify_bounds(betas, p_grid, samples, &out),
        Command::Compare { config, strategies, out } => cmd_compare(&config, &strategies, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let config = ExperimentConfig::from_file(path).map_err(|e| Failure::Usage(e.to_string()))?;
    config.validate().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(|e| Failure::io(path, e))
}

fn cmd_simulate(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config = config.with_seed(seed);
    }
    let dir = out.unwrap_or_else(|| config.output_path.clone());
    let sim = simulate(&config);
    create_dir(&dir)?;
    write_file(&dir.join("run.csv"), |w| sim.log.write_csv(w))?;
    write_file(&dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &sim.summary)?;
        writeln!(w)
    })?;

    let s = &sim.summary;
    println!(
        "{}: {} steps, final val_acc {}, steps_to_target {}, rollouts {}",
        s.strategy,
        s.steps,
        s.final_val_acc.map_or("-".into(), |v| format!("{v:.4}")),
        s.steps_to_target.map_or("-".into(), |v| v.to_string()),
        s.total_rollouts
    );
    match &sim.log.failure {
        Some(why) => Err(Failure::Runtime(format!("run stopped after {} steps: {why}", s.steps))),
        None => Ok(()),
    }
}

fn cmd_verify_bounds(
    betas: Option<Vec<f64>>,
    p_grid: Option<Vec<f64>>,
    samples: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    let defaults = BoundsConfig::default();
    let config = BoundsConfig {
        betas: betas.unwrap_or(defaults.betas),
        p_grid: p_grid.unwrap_or(defaults.p_grid),
        samples: samples.unwrap_or(defaults.samples),
        seed: defaults.seed,
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let report = verify_bounds(&config).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;

    for check in &report.checks {
        println!(
            "{} {} ({} cases, max error {:e}, tolerance {:e})",
            if check.passed { "ok  " } else { "FAIL" },
            check.name,
            check.cases,
            check.max_error,
            check.tolerance
        );
    }
    if report.passed {
        return Ok(());
    }
    for check in report.failed_checks() {
        for case in &check.failures {
            eprintln!("{}: {case}", check.name);
        }
    }
    Err(Failure::Runtime(format!("{} check(s) failed", report.failed_checks().count())))
}

fn cmd_compare(config_path: &Path, specs: &[String], out: Option<PathBuf>) -> Result<(), Failure> {
    if specs.len() < 2 {
        return Err(Failure::Usage(format!("compare needs at least 2 strategies, got {}", specs.len())));
    }
    let config = load_config(config_path)?;
    let strategies = specs
        .iter()
        .map(|s| s.trim().parse::<StrategyKind>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let cmp = compare(&config, &strategies).map_err(|e| Failure::Usage(e.to_string()))?;

    let dir = out.unwrap_or_else(|| config.output_path.clone());
    create_dir(&dir)?;
    write_file(&dir.join("compare.csv"), |w| cmp.write_csv(w))?;
    write_file(&dir.join("difficulty_trace.csv"), |w| cmp.write_trace_csv(w))?;

    for row in &cmp.rows {
        match &row.failure {
            None => println!(
                "{:<24} final val_acc {:.4}  steps_to_target {:>4}  rollouts {}",
                row.strategy,
                row.final_val_acc.unwrap_or(f64::NAN),
                row.steps_to_target.map_or("-".into(), |v| v.to_string()),
                row.total_rollouts
            ),
            Some(why) => println!("{:<24} failed: {why}", row.strategy),
        }
    }
    if cmp.any_failed() {
        return Err(Failure::Runtime("at least one strategy failed".into()));
    }
    Ok(())
}
