//! Tunable constants and calibration tables.
//!
//! The sample-complexity bounds behind the testers hide absolute constants.
//! Rather than bake guesses into the code, everything adjustable lives in two
//! small serializable structures: a [`ConstantsProfile`] with the multipliers,
//! and threshold tables produced by the calibration routines. Experiments ship
//! the profile they ran with, so a rerun sees the same numbers.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn one() -> f64 {
    1.0
}

fn default_confidence() -> f64 {
    0.8
}

/// Multipliers for the sample-size formulas, plus the inner confidence level
/// the thresholds are calibrated to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    /// Scales the visit-plan size m' relative to m / log^2(n/eps).
    #[serde(default = "one")]
    pub c_plan: f64,
    /// Scales the hitting-time term of the recommended trajectory length.
    #[serde(default = "one")]
    pub c_hit: f64,
    /// Scales the linear n/eps term of the recommended trajectory length.
    #[serde(default = "one")]
    pub c_lin: f64,
    /// Target success probability of the inner distribution test. Calibrated
    /// thresholds sit at this quantile of the null statistic.
    #[serde(default = "default_confidence")]
    pub inner_confidence: f64,
}

impl Default for ConstantsProfile {
    fn default() -> Self {
        ConstantsProfile {
            c_plan: 1.0,
            c_hit: 1.0,
            c_lin: 1.0,
            inner_confidence: 0.8,
        }
    }
}

impl ConstantsProfile {
    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProfileError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// One calibrated threshold for the pooled distribution test: domain size `s`,
/// proximity parameter `epsilon`, expected sample count `lambda`, and the
/// rejection cutoff `tau` for the statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidThresholdEntry {
    pub s: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub tau: f64,
    /// Mean of the null statistic seen during calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_mean: Option<f64>,
    /// Standard deviation of the null statistic seen during calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_sd: Option<f64>,
    /// Null simulations behind this entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Quantile of the null statistic tau was read from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentile: Option<f64>,
}

/// Lookup table of calibrated thresholds for the pooled distribution test.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IidThresholds {
    pub entries: Vec<IidThresholdEntry>,
}

impl IidThresholds {
    /// Find a threshold for the given domain size, proximity parameter, and
    /// expected sample count. Domain size must match exactly and epsilon to
    /// within 1e-9; among the remaining entries the nearest lambda wins.
    /// Returns None when nothing matches, in which case callers fall back to
    /// an uncalibrated default.
    pub fn lookup(&self, s: usize, epsilon: f64, lambda: f64) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.s == s && (e.epsilon - epsilon).abs() <= 1e-9)
            .min_by(|a, b| {
                let da = (a.lambda - lambda).abs();
                let db = (b.lambda - lambda).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|e| e.tau)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProfileError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Calibrated rejection cutoff for the sparse-chain edge statistic, together
/// with the settings it was measured under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi2Calibration {
    /// Sparsity parameter of the chain family the calibration ran on.
    pub n: usize,
    pub epsilon: f64,
    /// Expected word count per test.
    pub m: f64,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentile: Option<f64>,
}

impl Chi2Calibration {
    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProfileError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Empirical quantile by linear interpolation on the sorted sample.
/// `q` in [0, 1]; the sample must be nonempty.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}
