//! Likelihood-based evidence from Gaussian class models.
//!
//! Each class `k` of the frame has density `N(means[k], σ²)`. A node draws
//! `n_samples` observations from its true distribution and turns them into a
//! mass function: singleton masses proportional to the average likelihood of
//! the observations under each class, scaled by `1 − discount`, and the
//! remaining `discount` on the whole frame.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::evidence::{FrameOfDiscernment, MassFunction};

pub const DEFAULT_DISCOUNT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    /// Class means, one per frame element.
    pub means: Vec<f64>,
    pub sigma: f64,
    #[serde(default = "one")]
    pub n_samples: usize,
    #[serde(default = "default_discount")]
    pub discount: f64,
    /// Consecutive node blocks and the mean they sample from.
    pub groups: Vec<GaussianGroup>,
    /// Defaults to the scenario seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianGroup {
    pub count: usize,
    pub true_mean: f64,
}

fn one() -> usize {
    1
}

fn default_discount() -> f64 {
    DEFAULT_DISCOUNT
}

impl GaussianSpec {
    pub fn validate(&self, n_events: usize) -> Result<(), String> {
        if self.means.len() != n_events {
            return Err(format!("{} class means for a frame of {n_events}", self.means.len()));
        }
        if n_events < 2 {
            return Err("the Gaussian generator needs at least two classes".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.n_samples == 0 {
            return Err("n_samples must be positive".into());
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(format!("discount {} outside [0, 1)", self.discount));
        }
        if self
            .means
            .iter()
            .chain(self.groups.iter().map(|g| &g.true_mean))
            .any(|m| !m.is_finite())
        {
            return Err("means must be finite".into());
        }
        Ok(())
    }
}

/// Mass function for a fixed set of observations.
///
/// Average likelihoods are formed in log space so observations far from
/// every mean do not underflow to an all-zero row.
pub fn likelihood_bba(
    frame: Arc<FrameOfDiscernment>,
    observations: &[f64],
    means: &[f64],
    sigma: f64,
    discount: f64,
) -> MassFunction<f64> {
    let log_avg: Vec<f64> = means
        .iter()
        .map(|mu| {
            let logs: Vec<f64> = observations.iter().map(|x| -0.5 * ((x - mu) / sigma).powi(2)).collect();
            let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            peak + (logs.iter().map(|l| (l - peak).exp()).sum::<f64>() / logs.len() as f64).ln()
        })
        .collect();
    let peak = log_avg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_avg.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut masses = vec![0.0; frame.subset_count()];
    for (k, w) in weights.iter().enumerate() {
        masses[1 << k] = (1.0 - discount) * w / total;
    }
    masses[frame.full_mask()] += discount;
    MassFunction::new(frame, masses).expect("likelihood masses are normalized by construction")
}

/// Draws `n_samples` observations from `N(true_mean, σ²)` and converts them.
pub fn generate_gaussian_evidence<R: Rng + ?Sized>(
    frame: Arc<FrameOfDiscernment>,
    true_mean: f64,
    spec: &GaussianSpec,
    rng: &mut R,
) -> MassFunction<f64> {
    let normal = Normal::new(true_mean, spec.sigma).expect("sigma validated positive");
    let obs: Vec<f64> = (0..spec.n_samples).map(|_| normal.sample(rng)).collect();
    likelihood_bba(frame, &obs, &spec.means, spec.sigma, spec.discount)
}
