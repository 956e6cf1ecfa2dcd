//! Additive zero-mean Gaussian noise on every reading, the baseline the
//! paired scheme is compared against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::PowerTrace;
use crate::error::{Error, Result};
use crate::perturb::PerturbedTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianConfig {
    /// Variance in watt^2.
    pub variance: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianReport {
    pub sigma2: f64,
    pub seed: u64,
    pub floored_count: usize,
    pub total_delta_w: f64,
}

/// The raw draws `dx ~ N(0, variance)`, one per sample.
pub fn gaussian_draws(len: usize, config: &GaussianConfig) -> Result<Vec<f64>> {
    if !(config.variance > 0.0 && config.variance.is_finite()) {
        return Err(Error::config(format!(
            "Gaussian variance must be positive, got {}",
            config.variance
        )));
    }
    let normal = Normal::new(0.0, config.variance.sqrt()).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok((0..len).map(|_| normal.sample(&mut rng)).collect())
}

/// `x + dx` per sample, floored at 0 W. `applied_mask` marks the floored
/// samples.
pub fn gaussian_perturb(trace: &PowerTrace, config: &GaussianConfig) -> Result<PerturbedTrace> {
    let draws = gaussian_draws(trace.len(), config)?;
    let mut applied_mask = Vec::with_capacity(trace.len());
    let values = trace
        .values
        .iter()
        .zip(&draws)
        .map(|(x, dx)| {
            let v = x + dx;
            applied_mask.push(v < 0.0);
            v.max(0.0)
        })
        .collect();
    Ok(PerturbedTrace {
        values,
        applied_mask,
    })
}

pub fn gaussian_report(original: &PowerTrace, perturbed: &PerturbedTrace, config: &GaussianConfig) -> GaussianReport {
    GaussianReport {
        sigma2: config.variance,
        seed: config.seed,
        floored_count: perturbed.applied_mask.iter().filter(|f| **f).count(),
        total_delta_w: perturbed.total() - original.total(),
    }
}

/// Mean squared per-sample deviation between a perturbed trace and its
/// original: the Gaussian variance with the same L2 distortion.
pub fn match_distortion(perturbed: &PerturbedTrace, original: &PowerTrace) -> Result<f64> {
    if perturbed.values.len() != original.len() {
        return Err(Error::LengthMismatch {
            expected: original.len(),
            actual: perturbed.values.len(),
        });
    }
    let sum: f64 = perturbed
        .values
        .iter()
        .zip(&original.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / original.len() as f64)
}
