//! Numerical verification suite for the learnability bounds.
//!
//! Runs every checkable property of the reverse-KL analysis over a
//! configurable set of temperatures and pass rates and collects the
//! measured values into a serializable report:
//!
//! * endpoint degeneracy of the binary-reward KL,
//! * nonnegativity and agreement of the CGF and soft-value routes,
//! * exactness of `σ²/(2β²)` for Gaussian rewards,
//! * the CGF identity on random bounded discrete rewards,
//! * convergence of `residual · β³` to `κ₃/6`,
//! * the raw variance bound wherever the third cumulant is positive,
//! * unimodality of the KL profile,
//! * Monte-Carlo convergence of the sample estimator.

use rand::Rng;
use serde::Serialize;

use crate::learnability::{
    bound_residual_scan, exact_reverse_kl, kl_profile, monte_carlo_kl, reverse_kl_via_soft_value, variance_lower_bound,
    LearnabilityError, Temperature,
};
use crate::reward::RewardDistribution;
use crate::rng::{Purpose, Seed};

/// Tolerance for algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-12;
/// `|residual·β³ - κ₃/6|` allowed at β = 64; scales as `1/β`.
pub const ASYMPTOTIC_TOL_AT_64: f64 = 5e-3;
/// Monte-Carlo acceptance band in standard errors.
pub const MC_SIGMAS: f64 = 3.0;

pub const GAUSSIAN_SIGMAS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
pub const GAUSSIAN_BETAS: [f64; 3] = [0.5, 1.0, 4.0];
pub const CGF_IDENTITY_CASES: usize = 50;
pub const MAX_DISCRETE_SUPPORT: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum BoundsError {
    #[error("invalid verification arguments: {0}")]
    InvalidArguments(String),
    #[error(transparent)]
    Learnability(#[from] LearnabilityError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsConfig {
    pub betas: Vec<f64>,
    pub p_grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            p_grid: (0..=20).map(|i| i as f64 / 20.0).collect(),
            samples: 1_000_000,
            seed: 2024,
        }
    }
}

impl BoundsConfig {
    pub fn validate(&self) -> Result<(), BoundsError> {
        let bad = |m: String| Err(BoundsError::InvalidArguments(m));
        if self.betas.is_empty() {
            return bad("at least one beta is required".into());
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return bad(format!("beta {b} must be finite and > 0"));
        }
        if self.scan_betas().len() < 3 {
            return bad("the residual scan needs at least three distinct betas >= 1".into());
        }
        if self.p_grid.is_empty() {
            return bad("the pass-rate grid is empty".into());
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("pass rate {p} outside [0, 1]"));
        }
        if self.samples < 2 {
            return bad("at least 2 Monte-Carlo samples are required".into());
        }
        Ok(())
    }

    fn sorted_betas(&self) -> Vec<f64> {
        let mut b = self.betas.clone();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn scan_betas(&self) -> Vec<f64> {
        self.sorted_betas().into_iter().filter(|&b| b >= 1.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest deviation measured against this check's tolerance.
    pub max_error: f64,
    pub tolerance: f64,
    pub failures: Vec<String>,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, passed: true, cases: 0, max_error: 0.0, tolerance, failures: Vec::new() }
    }

    fn record(&mut self, error: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if error.is_finite() {
            self.max_error = self.max_error.max(error);
        }
        if !ok {
            self.passed = false;
            if self.failures.len() < 20 {
                self.failures.push(describe());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlRow {
    pub beta: f64,
    pub p: f64,
    pub exact_kl: f64,
    pub soft_value_kl: f64,
    pub variance_bound: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianRow {
    pub sigma: f64,
    pub beta: f64,
    pub exact_kl: f64,
    pub closed_form: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub p: f64,
    pub beta: f64,
    pub scaled_residual: f64,
    pub kappa3_over_6: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloRow {
    pub distribution: String,
    pub beta: f64,
    pub samples: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z_score: f64,
}

/// Contents of `bounds_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub config: BoundsConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub kl_table: Vec<KlRow>,
    pub gaussian_table: Vec<GaussianRow>,
    pub residual_table: Vec<ResidualRow>,
    pub monte_carlo: Vec<MonteCarloRow>,
}

impl BoundsReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn bern(p: f64) -> RewardDistribution {
    RewardDistribution::bernoulli(p).expect("grid validated to [0, 1]")
}

/// Tolerance on `|residual·β³ - κ₃/6|` at temperature `beta`.
pub fn asymptotic_tolerance(beta: f64) -> f64 {
    ASYMPTOTIC_TOL_AT_64 * 64.0 / beta
}

/// A random bounded discrete reward with at most [`MAX_DISCRETE_SUPPORT`]
/// support points in `[0, 5]`.
pub fn random_discrete<R: Rng>(rng: &mut R) -> RewardDistribution {
    let size = rng.random_range(1..=MAX_DISCRETE_SUPPORT);
    let mut support: Vec<f64> = (0..size).map(|_| rng.random_range(0.0..5.0)).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let weights: Vec<f64> = support.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let probs = weights.iter().map(|w| w / total).collect();
    RewardDistribution::discrete(support, probs).expect("normalized weights on ascending support")
}

pub fn verify_bounds(config: &BoundsConfig) -> Result<BoundsReport, BoundsError> {
    config.validate()?;
    let betas = config.sorted_betas();
    let seed = Seed(config.seed);

    let mut degeneracy = Check::new("endpoint_degeneracy", IDENTITY_TOL);
    let mut nonneg = Check::new("nonnegativity", IDENTITY_TOL);
    let mut routes = Check::new("cgf_vs_soft_value_routes", IDENTITY_TOL);
    let mut kl_table = Vec::new();
    for &beta in &betas {
        let temp = Temperature::new(beta)?;
        for &p in &config.p_grid {
            let d = bern(p);
            let exact = exact_reverse_kl(&d, temp)?;
            let soft = reverse_kl_via_soft_value(&d, temp)?;
            let bound = variance_lower_bound(&d, temp);
            kl_table.push(KlRow {
                beta,
                p,
                exact_kl: exact,
                soft_value_kl: soft,
                variance_bound: bound,
                residual: exact - bound,
            });
            nonneg.record((-exact).max(0.0), exact >= -IDENTITY_TOL, || format!("beta={beta} p={p}: kl={exact}"));
            let gap = (exact - soft).abs();
            routes.record(gap, gap <= IDENTITY_TOL, || format!("beta={beta} p={p}: |cgf - soft| = {gap:e}"));
        }
        for p in [0.0, 1.0] {
            let kl = exact_reverse_kl(&bern(p), temp)?;
            degeneracy.record(kl.abs(), kl.abs() <= IDENTITY_TOL, || format!("beta={beta} p={p}: kl={kl:e}"));
        }
    }

    let mut gaussian = Check::new("gaussian_exactness", IDENTITY_TOL);
    let mut gaussian_table = Vec::new();
    for sigma in GAUSSIAN_SIGMAS {
        for beta in GAUSSIAN_BETAS {
            let temp = Temperature::new(beta)?;
            let d = RewardDistribution::gaussian(0.0, sigma).expect("valid gaussian");
            let exact = exact_reverse_kl(&d, temp)?;
            let closed = sigma * sigma / (2.0 * beta * beta);
            let residual = exact - variance_lower_bound(&d, temp);
            gaussian_table.push(GaussianRow { sigma, beta, exact_kl: exact, closed_form: closed, residual });
            let err = (exact - closed).abs().max(residual.abs());
            gaussian
                .record(err, err <= IDENTITY_TOL, || format!("sigma={sigma} beta={beta}: kl={exact} closed={closed}"));
        }
    }

    let mut identity = Check::new("cgf_identity", IDENTITY_TOL);
    let mut rng = seed.stream(Purpose::Verify, &[1]);
    for case in 0..CGF_IDENTITY_CASES {
        let d = random_discrete(&mut rng);
        let beta = betas[case % betas.len()];
        let temp = Temperature::new(beta)?;
        let t = temp.inverse();
        let value_route = d.log_mgf(t).map_err(LearnabilityError::from)? - d.mean() * t;
        let cgf_route = d.cgf_centered(t).map_err(LearnabilityError::from)?;
        let gap = (value_route - cgf_route).abs();
        identity.record(gap, gap <= IDENTITY_TOL, || format!("case {case} beta={beta}: gap {gap:e}"));
    }

    let scan_betas = config.scan_betas();
    let beta_max = *scan_betas.last().expect("validated");
    let tol = asymptotic_tolerance(beta_max);
    let mut asymptotic = Check::new("residual_asymptotics", tol);
    let mut raw_bound = Check::new("raw_bound_when_kappa3_positive", 0.0);
    let mut residual_table = Vec::new();
    for &p in config.p_grid.iter().filter(|&&p| p > 0.0 && p < 1.0) {
        let d = bern(p);
        let k3 = d.cumulants().kappa3 / 6.0;
        let scan = bound_residual_scan(&d, &scan_betas)?;
        for &(beta, scaled) in &scan {
            residual_table.push(ResidualRow { p, beta, scaled_residual: scaled, kappa3_over_6: k3 });
        }
        let (_, last) = *scan.last().expect("non-empty scan");
        let err = (last - k3).abs();
        asymptotic.record(err, err <= tol, || format!("p={p} beta={beta_max}: {last} vs kappa3/6={k3}"));
        if d.cumulants().kappa3 > 0.0 {
            for &beta in betas.iter().filter(|&&b| b >= 8.0) {
                let temp = Temperature::new(beta)?;
                let kl = exact_reverse_kl(&d, temp)?;
                let bound = variance_lower_bound(&d, temp);
                raw_bound.record((bound - kl).max(0.0), kl >= bound, || {
                    format!("p={p} beta={beta}: kl={kl} < bound={bound}")
                });
            }
        }
    }

    let mut unimodal = Check::new("kl_profile_unimodal", 0.0);
    let fine_grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    for &beta in betas.iter().filter(|&&b| b >= 4.0) {
        let profile = kl_profile(Temperature::new(beta)?, &fine_grid)?;
        let peak = profile
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i)
            .expect("non-empty grid");
        let rising = profile[..=peak].windows(2).all(|w| w[0].1 <= w[1].1);
        let falling = profile[peak..].windows(2).all(|w| w[0].1 >= w[1].1);
        let interior = peak > 0 && peak + 1 < profile.len();
        let argmax = profile[peak].0;
        unimodal.record((argmax - 0.5).abs(), rising && falling && interior, || {
            format!("beta={beta}: profile not unimodal (argmax {argmax})")
        });
    }

    let mut mc = Check::new("monte_carlo_convergence", MC_SIGMAS);
    let mut monte_carlo = Vec::new();
    let cases = [
        ("gaussian(0,1)", RewardDistribution::gaussian(0.0, 1.0).expect("valid"), 2.0),
        ("bernoulli(0.5)", bern(0.5), 1.0),
    ];
    for (i, (name, d, beta)) in cases.into_iter().enumerate() {
        let temp = Temperature::new(beta)?;
        let samples = d.sample(&mut seed.stream(Purpose::Verify, &[2, i as u64]), config.samples);
        let est = monte_carlo_kl(&samples, temp)?;
        let exact = exact_reverse_kl(&d, temp)?;
        let z = (est.value - exact) / est.std_error;
        monte_carlo.push(MonteCarloRow {
            distribution: name.to_string(),
            beta,
            samples: config.samples,
            estimate: est.value,
            std_error: est.std_error,
            exact,
            z_score: z,
        });
        mc.record(z.abs(), z.abs() <= MC_SIGMAS, || {
            format!("{name} beta={beta}: estimate {} vs {exact} (z={z:.2})", est.value)
        });
    }

    let checks = vec![degeneracy, nonneg, routes, gaussian, identity, asymptotic, raw_bound, unimodal, mc];
    Ok(BoundsReport {
        config: config.clone(),
        passed: checks.iter().all(|c| c.passed),
        checks,
        kl_table,
        gaussian_table,
        residual_table,
        monte_carlo,
    })
}
