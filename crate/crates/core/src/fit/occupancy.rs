//! Occupancy statistics and truncated-Poisson fits.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Normalized atom-number distribution with its moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyStats {
    pub probabilities: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Maximum-likelihood Poisson mean, filled in by [`fit_poisson`].
    pub poisson_mean: Option<f64>,
}

impl OccupancyStats {
    /// Normalizes non-negative weights `w[n]`.
    pub fn from_occurrences(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(
                "occupancy weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("occupancy weights sum to zero".into()));
        }
        let probabilities: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mean = probabilities.iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>();
        let variance = probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean).powi(2) * p)
            .sum::<f64>();
        Ok(Self {
            probabilities,
            mean,
            variance,
            poisson_mean: None,
        })
    }

    pub fn n_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    /// Variance over mean; below one is sub-Poissonian.
    pub fn fano_factor(&self) -> f64 {
        if self.mean > 0.0 {
            self.variance / self.mean
        } else {
            f64::NAN
        }
    }

    pub fn loaded_probability(&self) -> f64 {
        1.0 - self.probabilities[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    /// ML mean of a Poisson law truncated to `0..=n_max`.
    pub mean: f64,
    pub n_max: usize,
    /// Raw variance over mean of the data.
    pub fano_factor: f64,
    pub sub_poissonian: bool,
    /// Data variance over the variance of the fitted truncated law.
    pub dispersion_vs_fit: f64,
    /// `Σ p ln(p / q)` between data and fitted law.
    pub kl_divergence: f64,
    pub fitted: Vec<f64>,
}

fn truncated_poisson(lambda: f64, n_max: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n_max + 1);
    let mut term = 1.0;
    for n in 0..=n_max {
        if n > 0 {
            term *= lambda / n as f64;
        }
        w.push(term);
    }
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

fn moments(p: &[f64]) -> (f64, f64) {
    let mean: f64 = p.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
    let var = p.iter().enumerate().map(|(n, x)| (n as f64 - mean).powi(2) * x).sum();
    (mean, var)
}

/// Maximum-likelihood Poisson mean for `occupancy`, treating the support
/// `0..=n_max` as a truncation.
///
/// The likelihood condition is that the truncated-law mean equals the data
/// mean; it is solved by bisection in `ln λ`. All mass on one `n` returns `n`.
pub fn fit_poisson(occupancy: &OccupancyStats) -> Result<PoissonFit> {
    let p = &occupancy.probabilities;
    let n_max = occupancy.n_max();
    let target = occupancy.mean;
    let mean = if let Some(single) = p.iter().position(|x| *x == 1.0) {
        single as f64
    } else if target <= 0.0 || n_max == 0 {
        0.0
    } else {
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if moments(&truncated_poisson(mid.exp(), n_max)).0 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    };
    if !mean.is_finite() {
        return Err(Error::NonFinite("Poisson mean"));
    }
    let fitted = truncated_poisson(mean, n_max);
    let (_, fit_var) = moments(&fitted);
    let kl = p
        .iter()
        .zip(&fitted)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum();
    let fano = occupancy.fano_factor();
    Ok(PoissonFit {
        mean,
        n_max,
        fano_factor: fano,
        sub_poissonian: fano < 1.0,
        dispersion_vs_fit: if fit_var > 0.0 {
            occupancy.variance / fit_var
        } else {
            f64::NAN
        },
        kl_divergence: kl,
        fitted,
    })
}
