//! Reverse KL divergence between an initial policy and its KL-regularized
//! soft-optimal counterpart, computed at the level of the reward
//! distribution.
//!
//! With temperature β, the soft-optimal policy reweights the initial one by
//! `exp(r / β)`. The divergence `KL(π_init ‖ π*)` then depends on the policy
//! only through the reward distribution and equals the centered CGF of the
//! reward at `1/β`:
//!
//! ```text
//! KL = log E[exp(r/β)] - μ/β = K_{r-μ}(1/β)
//! ```
//!
//! Both sides are implemented independently ([`exact_reverse_kl`] and
//! [`reverse_kl_via_soft_value`]) so they can check each other.

use serde::{Deserialize, Serialize};

use crate::reward::{CumulantSet, RewardDistribution, RewardError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnabilityError {
    #[error("temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("residual scan needs at least 3 ascending temperatures >= 1")]
    InvalidScan,
    #[error("pass rate {0} outside [0, 1]")]
    InvalidPassRate(f64),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples must be finite")]
    NonFiniteSample,
}

/// KL-regularization temperature β.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub const DEFAULT: Temperature = Temperature(1.0);

    pub fn new(beta: f64) -> Result<Self, LearnabilityError> {
        if beta.is_finite() && beta > 0.0 {
            Ok(Self(beta))
        } else {
            Err(LearnabilityError::InvalidTemperature(beta))
        }
    }

    pub fn beta(self) -> f64 {
        self.0
    }

    pub fn inverse(self) -> f64 {
        1.0 / self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Default temperatures for [`bound_residual_scan`].
pub const DEFAULT_SCAN_BETAS: [f64; 5] = [4.0, 8.0, 16.0, 32.0, 64.0];

/// Soft value `V* = β log E[exp(r/β)]`.
pub fn soft_value(d: &RewardDistribution, temp: Temperature) -> Result<f64, LearnabilityError> {
    if d.is_degenerate() {
        return Ok(d.mean());
    }
    Ok(temp.beta() * d.log_mgf(temp.inverse())?)
}

/// Reverse KL as the centered CGF at `1/β`.
pub fn exact_reverse_kl(d: &RewardDistribution, temp: Temperature) -> Result<f64, LearnabilityError> {
    Ok(d.cgf_centered(temp.inverse())?)
}

/// Reverse KL through the soft value: `log E[exp(r/β)] - μ/β`.
pub fn reverse_kl_via_soft_value(d: &RewardDistribution, temp: Temperature) -> Result<f64, LearnabilityError> {
    let t = temp.inverse();
    Ok(d.log_mgf(t)? - d.mean() * t)
}

/// Second-order lower control `κ₂ / (2β²)`; `p(1-p)/(2β²)` for binary rewards.
pub fn variance_lower_bound(d: &RewardDistribution, temp: Temperature) -> f64 {
    let t = temp.inverse();
    d.variance() * t * t / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityReport {
    pub beta: f64,
    pub exact_kl: f64,
    pub variance_bound: f64,
    /// `exact_kl - variance_bound`.
    pub residual: f64,
    pub soft_value: f64,
    pub cumulants: CumulantSet,
}

impl LearnabilityReport {
    pub fn new(d: &RewardDistribution, temp: Temperature) -> Result<Self, LearnabilityError> {
        let exact_kl = exact_reverse_kl(d, temp)?;
        let variance_bound = variance_lower_bound(d, temp);
        Ok(Self {
            beta: temp.beta(),
            exact_kl,
            variance_bound,
            residual: exact_kl - variance_bound,
            soft_value: soft_value(d, temp)?,
            cumulants: d.cumulants(),
        })
    }
}

/// `(β, residual · β³)` for each β. As β grows the scaled residual tends to
/// `κ₃ / 6`, the third-order CGF coefficient.
pub fn bound_residual_scan(d: &RewardDistribution, betas: &[f64]) -> Result<Vec<(f64, f64)>, LearnabilityError> {
    if betas.len() < 3 || betas.iter().any(|&b| b.is_nan() || b < 1.0) || betas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LearnabilityError::InvalidScan);
    }
    betas
        .iter()
        .map(|&beta| {
            let temp = Temperature::new(beta)?;
            let residual = exact_reverse_kl(d, temp)? - variance_lower_bound(d, temp);
            Ok((beta, residual * beta.powi(3)))
        })
        .collect()
}

/// Exact binary-reward KL at each pass rate in `grid`.
pub fn kl_profile(temp: Temperature, grid: &[f64]) -> Result<Vec<(f64, f64)>, LearnabilityError> {
    grid.iter()
        .map(|&p| {
            let d = RewardDistribution::bernoulli(p).map_err(|_| LearnabilityError::InvalidPassRate(p))?;
            Ok((p, exact_reverse_kl(&d, temp)?))
        })
        .collect()
}

/// Monte-Carlo estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Plug-in estimate `log mean(exp((r_i - r̄)/β))` of the reverse KL.
pub fn monte_carlo_kl_estimate(samples: &[f64], temp: Temperature) -> Result<f64, LearnabilityError> {
    Ok(monte_carlo_kl(samples, temp)?.value)
}

/// [`monte_carlo_kl_estimate`] plus a standard error.
///
/// The estimator is `log W̄ - r̄/β` with `W = exp(r/β)`; its influence
/// function is `W/E[W] - r/β`, whose sample standard deviation over `√n`
/// gives the standard error.
pub fn monte_carlo_kl(samples: &[f64], temp: Temperature) -> Result<KlEstimate, LearnabilityError> {
    let n = samples.len();
    if n < 2 {
        return Err(LearnabilityError::TooFewSamples(n));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(LearnabilityError::NonFiniteSample);
    }
    if samples.iter().all(|&r| r == samples[0]) {
        return Ok(KlEstimate { value: 0.0, std_error: 0.0, samples: n });
    }
    let t = temp.inverse();
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let centered = samples.iter().map(|&r| (r - mean) * t);
    let shift = centered.clone().fold(f64::NEG_INFINITY, f64::max);
    // Weights relative to the largest one: w_i = exp(c_i - shift) in (0, 1].
    let weights: Vec<f64> = centered.map(|c| (c - shift).exp()).collect();
    let w_mean = weights.iter().sum::<f64>() / nf;
    let value = shift + w_mean.ln();

    let infl: Vec<f64> = weights.iter().zip(samples).map(|(w, r)| w / w_mean - (r - mean) * t).collect();
    let infl_mean = infl.iter().sum::<f64>() / nf;
    let var = infl.iter().map(|x| (x - infl_mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(KlEstimate { value, std_error: (var / nf).sqrt(), samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(p: f64) -> RewardDistribution {
        RewardDistribution::bernoulli(p).unwrap()
    }
    fn temp(beta: f64) -> Temperature {
        Temperature::new(beta).unwrap()
    }

    #[test]
    fn temperature_rejects_nonpositive() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert_eq!(Temperature::default().beta(), 1.0);
    }

    #[test]
    fn soft_value_examples() {
        assert_eq!(soft_value(&b(1.0), temp(2.0)).unwrap(), 1.0);
        assert_eq!(soft_value(&b(0.0), temp(0.3)).unwrap(), 0.0);
        // ln((1 + e) / 2)
        let v = soft_value(&b(0.5), temp(1.0)).unwrap();
        assert!((v - 0.620_114_506_958_277_5).abs() < 1e-15);
    }

    #[test]
    fn exact_kl_examples() {
        let kl = exact_reverse_kl(&b(0.5), temp(1.0)).unwrap();
        assert!((kl - 0.120_114_506_958_277_52).abs() < 1e-15);
        for mu in [-3.0, 0.0, 5.0] {
            let g = RewardDistribution::gaussian(mu, 2.0).unwrap();
            assert!((exact_reverse_kl(&g, temp(4.0)).unwrap() - 0.125).abs() < 1e-15);
        }
        for beta in [0.01, 1.0, 100.0] {
            assert_eq!(exact_reverse_kl(&b(1.0), temp(beta)).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_paths_agree() {
        for p in [0.01, 0.2, 0.5, 0.93] {
            for beta in [0.1, 1.0, 7.0, 64.0] {
                let a = exact_reverse_kl(&b(p), temp(beta)).unwrap();
                let c = reverse_kl_via_soft_value(&b(p), temp(beta)).unwrap();
                assert!((a - c).abs() <= 1e-12, "p={p} beta={beta}: {a} vs {c}");
            }
        }
    }

    #[test]
    fn variance_bound_examples() {
        assert_eq!(variance_lower_bound(&b(0.5), temp(1.0)), 0.125);
        assert_eq!(variance_lower_bound(&b(0.0), temp(3.0)), 0.0);
        assert!((variance_lower_bound(&b(0.3), temp(2.0)) - 0.02625).abs() < 1e-15);
    }

    #[test]
    fn report_for_degenerate_and_gaussian() {
        let r = LearnabilityReport::new(&b(0.0), temp(1.0)).unwrap();
        assert_eq!((r.exact_kl, r.variance_bound, r.residual), (0.0, 0.0, 0.0));
        let g = RewardDistribution::gaussian(1.0, 0.5).unwrap();
        let r = LearnabilityReport::new(&g, temp(0.5)).unwrap();
        assert!(r.residual.abs() <= 1e-12);
        assert!((r.soft_value - (1.0 + 0.25 / 1.0)).abs() < 1e-12);
    }

    #[test]
    fn residual_scan_examples() {
        // Reference values from a 40-digit evaluation.
        let scan = bound_residual_scan(&b(0.2), &[16.0, 32.0, 64.0]).unwrap();
        let expected = [0.016_013_752_361_411_87, 0.016_007_609_657_837_82, 0.016_003_986_362_744_65];
        for ((_, got), want) in scan.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        let half = bound_residual_scan(&b(0.5), &[16.0, 32.0, 64.0]).unwrap();
        let expected = [-3.254_360_874_059_593e-4, -1.627_498_210_706_526e-4, -8.137_888_381_021_31e-5];
        for ((_, got), want) in half.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        let g = RewardDistribution::gaussian(0.0, 1.0).unwrap();
        for (_, v) in bound_residual_scan(&g, &DEFAULT_SCAN_BETAS).unwrap() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn residual_scan_preconditions() {
        assert!(bound_residual_scan(&b(0.5), &[16.0, 32.0]).is_err());
        assert!(bound_residual_scan(&b(0.5), &[0.5, 32.0, 64.0]).is_err());
        assert!(bound_residual_scan(&b(0.5), &[64.0, 32.0, 16.0]).is_err());
    }

    #[test]
    fn kl_profile_examples() {
        let ends = kl_profile(temp(3.0), &[0.0, 1.0]).unwrap();
        assert_eq!(ends, vec![(0.0, 0.0), (1.0, 0.0)]);
        let mid = kl_profile(temp(10.0), &[0.5]).unwrap();
        assert!((mid[0].1 - 0.001_249_479_513_625_585).abs() < 1e-15);
        assert!(kl_profile(temp(1.0), &[1.2]).is_err());
    }

    #[test]
    fn kl_profile_unimodal_near_half() {
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let prof = kl_profile(temp(8.0), &grid).unwrap();
        let (argmax, _) =
            prof.iter().copied().fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!((argmax - 0.5).abs() <= 0.05);
        let peak = prof.iter().position(|x| x.0 == argmax).unwrap();
        assert!(prof[..=peak].windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(prof[peak..].windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn monte_carlo_edge_cases() {
        assert_eq!(monte_carlo_kl_estimate(&[0.3; 10], temp(1.0)).unwrap(), 0.0);
        assert!(matches!(monte_carlo_kl_estimate(&[1.0], temp(1.0)), Err(LearnabilityError::TooFewSamples(1))));
        assert!(monte_carlo_kl_estimate(&[1.0, f64::NAN], temp(1.0)).is_err());
    }
}
