//! Execution-horizon policies.
//!
//! A policy maps the per-step, per-action diffusion update magnitudes of one
//! generated chunk to the number of actions the robot executes before the
//! next chunk takes over.
//!
//! The confidence policy treats an action as unreliable when its final
//! denoising update is larger than `(1 + t)` times the mean of its earlier
//! updates. The executed prefix stops right before the first such action,
//! floored at `min_horizon`.

use serde::{Deserialize, Serialize};

/// Default trip threshold of the confidence policy.
pub const DEFAULT_THRESHOLD: f64 = 0.4;
/// Default floor of the confidence policy.
pub const DEFAULT_MIN_HORIZON: u32 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HorizonError {
    #[error("update magnitudes need at least 2 diffusion steps, got {0}")]
    TooFewSteps(usize),
    #[error("update magnitudes need at least 1 action")]
    EmptyChunk,
    #[error("step {step} has {got} actions, expected {expected}")]
    Ragged {
        step: usize,
        got: usize,
        expected: usize,
    },
    #[error("update magnitude at step {step}, action {action} is {value} (must be finite and >= 0)")]
    BadEntry {
        step: usize,
        action: usize,
        value: f64,
    },
    #[error("confidence threshold must be finite and >= 0, got {0}")]
    BadThreshold(f64),
    #[error("horizon must be >= 1")]
    ZeroHorizon,
    #[error("cannot average over an empty sequence")]
    EmptySequence,
}

/// `K x N` matrix of update magnitudes; row `k` is diffusion step `k`,
/// column `n` is action `n` of the chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct UpdateMagnitudes {
    rows: Vec<Vec<f64>>,
}

impl UpdateMagnitudes {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, HorizonError> {
        if rows.len() < 2 {
            return Err(HorizonError::TooFewSteps(rows.len()));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(HorizonError::EmptyChunk);
        }
        for (step, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(HorizonError::Ragged {
                    step,
                    got: row.len(),
                    expected: width,
                });
            }
            for (action, &value) in row.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(HorizonError::BadEntry {
                        step,
                        action,
                        value,
                    });
                }
            }
        }
        Ok(UpdateMagnitudes { rows })
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn chunk_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, step: usize, action: usize) -> f64 {
        self.rows[step][action]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Mean of the updates to `action` over every step except the final one.
    pub fn earlier_mean(&self, action: usize) -> f64 {
        let earlier = &self.rows[..self.rows.len() - 1];
        earlier.iter().map(|row| row[action]).sum::<f64>() / earlier.len() as f64
    }

    pub fn final_update(&self, action: usize) -> f64 {
        self.rows[self.rows.len() - 1][action]
    }

    /// Returns the matrix with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, HorizonError> {
        UpdateMagnitudes::new(
            self.rows
                .iter()
                .map(|row| row.iter().map(|v| v * factor).collect())
                .collect(),
        )
    }
}

impl TryFrom<Vec<Vec<f64>>> for UpdateMagnitudes {
    type Error = HorizonError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        UpdateMagnitudes::new(rows)
    }
}

impl From<UpdateMagnitudes> for Vec<Vec<f64>> {
    fn from(u: UpdateMagnitudes) -> Self {
        u.rows
    }
}

/// Horizon policy selection, as carried in a request's policy field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HorizonPolicy {
    Static {
        horizon: u32,
    },
    ConfidenceThreshold {
        threshold: f64,
        min_horizon: u32,
    },
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        HorizonPolicy::ConfidenceThreshold {
            threshold: DEFAULT_THRESHOLD,
            min_horizon: DEFAULT_MIN_HORIZON,
        }
    }
}

impl HorizonPolicy {
    pub fn confidence(threshold: f64, min_horizon: u32) -> Self {
        HorizonPolicy::ConfidenceThreshold {
            threshold,
            min_horizon,
        }
    }

    pub fn validate(&self) -> Result<(), HorizonError> {
        match *self {
            HorizonPolicy::Static { horizon } => {
                if horizon == 0 {
                    return Err(HorizonError::ZeroHorizon);
                }
            }
            HorizonPolicy::ConfidenceThreshold {
                threshold,
                min_horizon,
            } => {
                if !threshold.is_finite() || threshold < 0.0 {
                    return Err(HorizonError::BadThreshold(threshold));
                }
                if min_horizon == 0 {
                    return Err(HorizonError::ZeroHorizon);
                }
            }
        }
        Ok(())
    }

    /// Short label for reports: `static` or `confidence`.
    pub fn label(&self) -> &'static str {
        match self {
            HorizonPolicy::Static { .. } => "static",
            HorizonPolicy::ConfidenceThreshold { .. } => "confidence",
        }
    }

    /// The swept parameter: the horizon for static, `t` for confidence.
    pub fn parameter(&self) -> f64 {
        match *self {
            HorizonPolicy::Static { horizon } => f64::from(horizon),
            HorizonPolicy::ConfidenceThreshold { threshold, .. } => threshold,
        }
    }

    /// Smallest horizon this policy can return on a chunk of `chunk_size`.
    pub fn floor(&self, chunk_size: u32) -> u32 {
        match *self {
            HorizonPolicy::Static { horizon } => horizon.min(chunk_size),
            HorizonPolicy::ConfidenceThreshold { min_horizon, .. } => min_horizon.min(chunk_size),
        }
    }
}

/// Number of leading actions before the first one whose final update exceeds
/// `(1 + threshold)` times its earlier mean; the chunk size if none does.
pub fn threshold_horizon(u: &UpdateMagnitudes, threshold: f64) -> u32 {
    let factor = 1.0 + threshold;
    (0..u.chunk_size())
        .find(|&n| u.final_update(n) > factor * u.earlier_mean(n))
        .unwrap_or(u.chunk_size()) as u32
}

pub fn decide_horizon(policy: &HorizonPolicy, u: &UpdateMagnitudes) -> Result<u32, HorizonError> {
    policy.validate()?;
    let chunk = u.chunk_size() as u32;
    Ok(match *policy {
        HorizonPolicy::Static { horizon } => horizon.min(chunk),
        HorizonPolicy::ConfidenceThreshold {
            threshold,
            min_horizon,
        } => threshold_horizon(u, threshold).max(min_horizon).min(chunk),
    })
}

/// Mean horizon of each policy over a sequence of chunks.
pub fn sweep_thresholds(
    policies: &[HorizonPolicy],
    chunks: &[UpdateMagnitudes],
) -> Result<Vec<f64>, HorizonError> {
    if policies.is_empty() || chunks.is_empty() {
        return Err(HorizonError::EmptySequence);
    }
    policies
        .iter()
        .map(|policy| {
            let total = chunks.iter().try_fold(0u64, |acc, u| {
                decide_horizon(policy, u).map(|h| acc + u64::from(h))
            })?;
            Ok(total as f64 / chunks.len() as f64)
        })
        .collect()
}
