//! Group-relative advantages, empirical pass rates, and prompt difficulty
//! categories.

use serde::{Deserialize, Serialize};

use crate::sim::TaskId;

/// Default category boundary ε.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("a rollout group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("pass rate needs at least one reward")]
    Empty,
    #[error("reward {0} is not binary (expected 0 or 1)")]
    NonBinary(f64),
    #[error("reward {0} is not finite")]
    NonFinite(f64),
    #[error("accuracy and reward lengths differ ({accuracy} vs {rewards})")]
    LengthMismatch { rewards: usize, accuracy: usize },
    #[error("pass rate {0} outside [0, 1]")]
    InvalidPassRate(f64),
    #[error("epsilon {0} outside (0, 0.5)")]
    InvalidEpsilon(f64),
}

/// Standardized rewards `(r_i - mean) / std` with the population standard
/// deviation. A group whose rewards are all equal carries no signal and
/// gets all-zero advantages.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if let Some(&bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(GrpoError::NonFinite(bad));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Mean of binary correctness rewards.
pub fn empirical_pass_rate(binary_rewards: &[f64]) -> Result<f64, GrpoError> {
    if binary_rewards.is_empty() {
        return Err(GrpoError::Empty);
    }
    if let Some(&bad) = binary_rewards.iter().find(|&&r| r != 0.0 && r != 1.0) {
        return Err(GrpoError::NonBinary(bad));
    }
    Ok(binary_rewards.iter().sum::<f64>() / binary_rewards.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    AbsoluteHard,
    SoftHard,
    Intermediate,
    SoftEasy,
    AbsoluteEasy,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::AbsoluteHard,
        Category::SoftHard,
        Category::Intermediate,
        Category::SoftEasy,
        Category::AbsoluteEasy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyCategory {
    pub category: Category,
    pub epsilon: f64,
}

/// Buckets a pass rate: `0` absolute-hard, `(0, ε]` soft-hard,
/// `(ε, 1-ε)` intermediate, `[1-ε, 1)` soft-easy, `1` absolute-easy.
pub fn categorize(pass_rate: f64, epsilon: f64) -> Result<DifficultyCategory, GrpoError> {
    if !(0.0..=1.0).contains(&pass_rate) {
        return Err(GrpoError::InvalidPassRate(pass_rate));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(GrpoError::InvalidEpsilon(epsilon));
    }
    let category = if pass_rate == 0.0 {
        Category::AbsoluteHard
    } else if pass_rate == 1.0 {
        Category::AbsoluteEasy
    } else if pass_rate <= epsilon {
        Category::SoftHard
    } else if pass_rate >= 1.0 - epsilon {
        Category::SoftEasy
    } else {
        Category::Intermediate
    };
    Ok(DifficultyCategory { category, epsilon })
}

/// One prompt's `G` sampled rewards with their pass rate and advantages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutGroup {
    pub prompt_id: TaskId,
    pub rewards: Vec<f64>,
    pub pass_rate: f64,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    /// Group of binary correctness rewards; the pass rate is their mean.
    pub fn from_binary(prompt_id: TaskId, rewards: Vec<f64>) -> Result<Self, GrpoError> {
        let pass_rate = empirical_pass_rate(&rewards)?;
        let advantages = group_advantages(&rewards)?;
        Ok(Self { prompt_id, rewards, pass_rate, advantages })
    }

    /// Group of composite rewards; the pass rate is computed from the
    /// binary accuracy component only.
    pub fn with_accuracy(prompt_id: TaskId, rewards: Vec<f64>, accuracy: &[f64]) -> Result<Self, GrpoError> {
        if accuracy.len() != rewards.len() {
            return Err(GrpoError::LengthMismatch { rewards: rewards.len(), accuracy: accuracy.len() });
        }
        let pass_rate = empirical_pass_rate(accuracy)?;
        let advantages = group_advantages(&rewards)?;
        Ok(Self { prompt_id, rewards, pass_rate, advantages })
    }

    pub fn group_size(&self) -> usize {
        self.rewards.len()
    }

    /// True when every advantage is zero.
    pub fn is_uninformative(&self) -> bool {
        self.advantages.iter().all(|&a| a == 0.0)
    }
}
