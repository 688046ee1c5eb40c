//! Reward distributions and their exact moments, cumulants, and centered
//! cumulant generating functions.
//!
//! Three families cover the rewards the learnability analysis quantifies
//! over: binary correctness (Bernoulli), Gaussian rewards, and bounded
//! discrete ("multinomial") rewards on a finite support. A composite of
//! bounded sub-rewards is represented by the discrete distribution of its
//! sum, see [`RewardDistribution::independent_sum`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::{log_add_exp, log_sum_exp};

/// Tolerance on `sum(probs) == 1` for discrete rewards.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("bernoulli parameter must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("gaussian parameters must be finite with sigma >= 0, got mu={mu}, sigma={sigma}")]
    InvalidGaussian { mu: f64, sigma: f64 },
    #[error("discrete reward: {0}")]
    InvalidDiscrete(String),
    #[error("cumulant generating function is not finite at t={t}")]
    NonFinite { t: f64 },
    #[error("cannot form an independent sum of non-discrete rewards")]
    NotDiscrete,
}

/// Distribution of a verifiable reward under a fixed policy.
///
/// Constructed only through the validating constructors, so every value is
/// a valid distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardDistribution {
    kind: Kind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    Bernoulli { p: f64 },
    Gaussian { mu: f64, sigma: f64 },
    Discrete { support: Vec<f64>, probs: Vec<f64> },
}

/// Mean and central cumulants up to order four.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub mean: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
}

impl CumulantSet {
    /// Fourth-order Taylor polynomial of the centered CGF at `t`.
    pub fn cgf_series(&self, t: f64) -> f64 {
        let t2 = t * t;
        self.kappa2 * t2 / 2.0 + self.kappa3 * t2 * t / 6.0 + self.kappa4 * t2 * t2 / 24.0
    }
}

impl RewardDistribution {
    pub fn bernoulli(p: f64) -> Result<Self, RewardError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(RewardError::InvalidProbability(p));
        }
        Ok(Self { kind: Kind::Bernoulli { p } })
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self, RewardError> {
        if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
            return Err(RewardError::InvalidGaussian { mu, sigma });
        }
        Ok(Self { kind: Kind::Gaussian { mu, sigma } })
    }

    /// Finite discrete reward. `support` must be strictly ascending and
    /// finite; `probs` nonnegative and summing to one within
    /// [`PROB_SUM_TOL`].
    pub fn discrete(support: Vec<f64>, probs: Vec<f64>) -> Result<Self, RewardError> {
        let bad = |msg: &str| Err(RewardError::InvalidDiscrete(msg.to_string()));
        if support.is_empty() {
            return bad("empty support");
        }
        if support.len() != probs.len() {
            return bad("support and probability lengths differ");
        }
        if support.iter().any(|x| !x.is_finite()) {
            return bad("support values must be finite");
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return bad("support must be strictly ascending");
        }
        if probs.iter().any(|&q| !q.is_finite() || q < 0.0) {
            return bad("probabilities must be finite and nonnegative");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(RewardError::InvalidDiscrete(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { kind: Kind::Discrete { support, probs } })
    }

    /// Uniform distribution over a strictly ascending support.
    pub fn uniform(support: Vec<f64>) -> Result<Self, RewardError> {
        let n = support.len();
        Self::discrete(support, vec![1.0 / n.max(1) as f64; n])
    }

    /// Distribution of the sum of independent bounded rewards, e.g. a
    /// format + language + accuracy composite scoring in `{0, 1, 2, 3}`.
    /// Bernoulli parts are treated as discrete on `{0, 1}`.
    pub fn independent_sum(parts: &[RewardDistribution]) -> Result<Self, RewardError> {
        let mut acc: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        for part in parts {
            let (support, probs) = part.as_discrete().ok_or(RewardError::NotDiscrete)?;
            let mut next = Vec::with_capacity(acc.len() * support.len());
            for &(x, px) in &acc {
                for (&y, &py) in support.iter().zip(&probs) {
                    next.push((x + y, px * py));
                }
            }
            next.sort_by(|a, b| a.0.total_cmp(&b.0));
            acc.clear();
            for (x, p) in next {
                match acc.last_mut() {
                    Some(last) if (last.0 - x).abs() <= 1e-12 * x.abs().max(1.0) => last.1 += p,
                    _ => acc.push((x, p)),
                }
            }
        }
        let (support, probs) = acc.into_iter().unzip();
        Self::discrete(support, probs)
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    fn as_discrete(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            Kind::Bernoulli { p } => Some((vec![0.0, 1.0], vec![1.0 - p, *p])),
            Kind::Discrete { support, probs } => Some((support.clone(), probs.clone())),
            Kind::Gaussian { .. } => None,
        }
    }

    /// True when the reward is almost surely constant.
    pub fn is_degenerate(&self) -> bool {
        match &self.kind {
            Kind::Bernoulli { p } => *p == 0.0 || *p == 1.0,
            Kind::Gaussian { sigma, .. } => *sigma == 0.0,
            Kind::Discrete { probs, .. } => probs.iter().filter(|&&q| q > 0.0).count() <= 1,
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            Kind::Bernoulli { p } => *p,
            Kind::Gaussian { mu, .. } => *mu,
            Kind::Discrete { support, probs } => support.iter().zip(probs).map(|(x, q)| x * q).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        self.cumulants().kappa2
    }

    /// Mean and central cumulants κ₂..κ₄.
    ///
    /// Closed forms for Bernoulli and Gaussian; discrete rewards go through
    /// the central moments of `r - mean`.
    pub fn cumulants(&self) -> CumulantSet {
        match &self.kind {
            Kind::Bernoulli { p } => {
                let v = p * (1.0 - p);
                CumulantSet { mean: *p, kappa2: v, kappa3: v * (1.0 - 2.0 * p), kappa4: v * (1.0 - 6.0 * v) }
            }
            Kind::Gaussian { mu, sigma } => CumulantSet { mean: *mu, kappa2: sigma * sigma, kappa3: 0.0, kappa4: 0.0 },
            Kind::Discrete { support, probs } => {
                let mean = self.mean();
                let [m2, m3, m4] = central_moments(support, probs, mean);
                CumulantSet { mean, kappa2: m2, kappa3: m3, kappa4: m4 - 3.0 * m2 * m2 }
            }
        }
    }

    /// Centered cumulant generating function `K_{r-μ}(t) = log E[exp(t (r - μ))]`.
    ///
    /// Exact for every family; discrete and Bernoulli rewards are evaluated
    /// in max-shifted log-sum-exp form. Degenerate rewards and `t = 0`
    /// return exactly zero.
    pub fn cgf_centered(&self, t: f64) -> Result<f64, RewardError> {
        if !t.is_finite() {
            return Err(RewardError::NonFinite { t });
        }
        if t == 0.0 || self.is_degenerate() {
            return Ok(0.0);
        }
        let value = match &self.kind {
            Kind::Bernoulli { p } => log_add_exp((-p).ln_1p(), p.ln() + t) - p * t,
            Kind::Gaussian { sigma, .. } => 0.5 * sigma * sigma * t * t,
            Kind::Discrete { support, probs } => {
                let mean = self.mean();
                log_sum_exp(support.iter().zip(probs).filter(|(_, &q)| q > 0.0).map(|(x, q)| q.ln() + t * (x - mean)))
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(RewardError::NonFinite { t })
        }
    }

    /// Uncentered log moment generating function `log E[exp(t r)]`.
    pub fn log_mgf(&self, t: f64) -> Result<f64, RewardError> {
        if !t.is_finite() {
            return Err(RewardError::NonFinite { t });
        }
        let value = match &self.kind {
            Kind::Bernoulli { p } => {
                if *p == 0.0 {
                    0.0
                } else if *p == 1.0 {
                    t
                } else {
                    log_add_exp((-p).ln_1p(), p.ln() + t)
                }
            }
            Kind::Gaussian { mu, sigma } => mu * t + 0.5 * sigma * sigma * t * t,
            Kind::Discrete { support, probs } => {
                log_sum_exp(support.iter().zip(probs).filter(|(_, &q)| q > 0.0).map(|(x, q)| q.ln() + t * x))
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(RewardError::NonFinite { t })
        }
    }

    /// `n` independent draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match &self.kind {
            Kind::Bernoulli { p } => (0..n).map(|_| if rng.random::<f64>() < *p { 1.0 } else { 0.0 }).collect(),
            Kind::Gaussian { mu, sigma } => (0..n)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    mu + sigma * z
                })
                .collect(),
            Kind::Discrete { support, probs } => {
                let mut cdf = Vec::with_capacity(probs.len());
                let mut running = 0.0;
                for q in probs {
                    running += q;
                    cdf.push(running);
                }
                let last = support.len() - 1;
                (0..n)
                    .map(|_| {
                        let u = rng.random::<f64>() * running;
                        let idx = cdf.partition_point(|&c| c <= u).min(last);
                        support[idx]
                    })
                    .collect()
            }
        }
    }
}

fn central_moments(support: &[f64], probs: &[f64], mean: f64) -> [f64; 3] {
    let mut m = [0.0; 3];
    for (x, q) in support.iter().zip(probs) {
        let z = x - mean;
        let z2 = z * z;
        m[0] += q * z2;
        m[1] += q * z2 * z;
        m[2] += q * z2 * z2;
    }
    m
}
