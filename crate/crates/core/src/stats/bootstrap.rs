//! Patient-level bootstrap of arbitrary metrics.
//!
//! Replicate `i` draws its resample indices from [`crate::rng::stream`]`(seed, i)`
//! with `random_range(0..n)`, one draw per unit, so every replicate is fixed
//! by `(seed, i)` alone and the result is identical for any thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::StatsError;
use crate::repeatability::empirical_percentile;

/// Iterations used when nothing else is configured.
pub const DEFAULT_ITERATIONS: usize = 500;
/// Largest tolerated share of failed replicates.
pub const MAX_MISSING_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    /// 2.5th / 97.5th percentiles of the replicates.
    #[default]
    Percentile,
    /// Point estimate +/- t(0.975, B-1) times the replicate standard deviation.
    TBased,
}

impl std::str::FromStr for CiMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "percentile" => Ok(CiMethod::Percentile),
            "t-based" | "t" => Ok(CiMethod::TBased),
            other => Err(format!(
                "unknown ci method {other:?} (expected percentile or t-based)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub metric_name: String,
    pub point_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_method: CiMethod,
    pub iterations: usize,
    pub seed: u64,
    pub n_missing: usize,
    /// Set when the interval excludes the point estimate.
    pub point_outside_ci: bool,
    /// Successful replicates in iteration order.
    pub replicates: Vec<f64>,
}

/// Resample indices of replicate `iteration` over `n` units.
pub fn resample_indices(seed: u64, iteration: usize, n: usize) -> Vec<usize> {
    let mut rng = crate::rng::stream(seed, iteration as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstraps `metric` by resampling `units` (patients) with replacement.
pub fn bootstrap_metric<T, F, E>(
    metric_name: &str,
    units: &[T],
    metric: F,
    iterations: usize,
    seed: u64,
    ci_method: CiMethod,
) -> Result<BootstrapResult, StatsError>
where
    T: Sync,
    F: Fn(&[&T]) -> Result<f64, E> + Sync,
    E: std::fmt::Display,
{
    let n = units.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    if iterations == 0 {
        return Err(StatsError::NoIterations);
    }
    let all: Vec<&T> = units.iter().collect();
    let point_estimate = metric(&all).map_err(|e| StatsError::Metric(e.to_string()))?;
    if !point_estimate.is_finite() {
        return Err(StatsError::NonFinite);
    }

    let slots: Vec<Option<f64>> = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let sample: Vec<&T> = resample_indices(seed, i, n)
                .into_iter()
                .map(|j| &units[j])
                .collect();
            metric(&sample).ok().filter(|v| v.is_finite())
        })
        .collect();
    let replicates: Vec<f64> = slots.iter().flatten().copied().collect();
    let n_missing = iterations - replicates.len();
    if n_missing as f64 > MAX_MISSING_FRACTION * iterations as f64 {
        return Err(StatsError::TooManyMissing {
            missing: n_missing,
            iterations,
        });
    }

    let (ci_low, ci_high) = match ci_method {
        CiMethod::Percentile => (
            empirical_percentile(&replicates, 2.5)
                .map_err(|e| StatsError::Metric(e.to_string()))?,
            empirical_percentile(&replicates, 97.5)
                .map_err(|e| StatsError::Metric(e.to_string()))?,
        ),
        CiMethod::TBased => {
            let b = replicates.len();
            if b < 2 {
                (point_estimate, point_estimate)
            } else {
                let mean = replicates.iter().sum::<f64>() / b as f64;
                let sd = (replicates.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (b - 1) as f64)
                    .sqrt();
                let t = StudentsT::new(0.0, 1.0, (b - 1) as f64)
                    .map_err(|e| StatsError::Distribution(e.to_string()))?
                    .inverse_cdf(0.975);
                (point_estimate - t * sd, point_estimate + t * sd)
            }
        }
    };

    Ok(BootstrapResult {
        metric_name: metric_name.to_string(),
        point_estimate,
        ci_low,
        ci_high,
        ci_method,
        iterations,
        seed,
        n_missing,
        point_outside_ci: point_estimate < ci_low || point_estimate > ci_high,
        replicates,
    })
}
