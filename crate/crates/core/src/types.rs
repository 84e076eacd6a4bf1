//! Normalized Poisson distributions over cognitive levels.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Poisson weights `λ^k / k!` restricted to levels `0..=max_level` and renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypePmf {
    pub lambda_poisson: f64,
    pub max_level: usize,
    pub probs: Vec<f64>,
}

impl TypePmf {
    /// Builds the pmf with the ratio recurrence `w_k = w_{k-1} · λ / k`, rescaled
    /// so the largest weight is one; the common `e^λ` factor is never formed.
    pub fn normalized_poisson(lambda_poisson: f64, max_level: usize) -> Result<Self> {
        if !(lambda_poisson.is_finite() && lambda_poisson > 0.0) {
            return Err(Error::Argument(format!(
                "Poisson rate must be positive and finite, got {lambda_poisson}"
            )));
        }
        // Work in log space so large levels and rates cannot overflow.
        let mut logw = Vec::with_capacity(max_level + 1);
        let mut acc = 0.0f64;
        logw.push(0.0);
        for k in 1..=max_level {
            acc += (lambda_poisson / k as f64).ln();
            logw.push(acc);
        }
        let peak = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logw.iter().map(|l| (l - peak).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            lambda_poisson,
            max_level,
            probs,
        })
    }

    /// The actual population pmf over levels 0, 1, 2.
    pub fn population(lambda_poisson: f64) -> Result<Self> {
        Self::normalized_poisson(lambda_poisson, 2)
    }

    /// Level-2's perceived pmf over levels 0, 1.
    pub fn perceived_by_level2(lambda_poisson: f64) -> Result<Self> {
        Self::normalized_poisson(lambda_poisson, 1)
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }
}
