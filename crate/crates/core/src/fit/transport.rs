//! Empirical count-versus-height model and the transport-ensemble fit for the
//! number of atoms along a tweezer lattice.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nlls::{nlls_fit, Bounds, NllsOptions};
use super::FitDiagnostics;
use crate::{Error, Result};

/// Single-atom counts `I(z) = A exp(-z / ζ)` for `z > 0` and `0` for `z ≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialModel {
    pub amplitude: f64,
    /// Decay length in meters; infinite for a flat profile.
    pub decay_length: f64,
}

impl ExponentialModel {
    pub fn eval(&self, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            self.amplitude * (-z / self.decay_length).exp()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub model: ExponentialModel,
    /// Covariance of `(A, 1/ζ)`.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub diagnostics: FitDiagnostics,
}

/// Least-squares exponential through `(z, counts)`, started from the
/// log-linear regression.
pub fn fit_exponential_counts(z: &[f64], counts: &[f64]) -> Result<ExponentialFit> {
    if z.len() != counts.len() {
        return Err(Error::InvalidInput("z and counts differ in length".into()));
    }
    if z.len() < 3 {
        return Err(Error::InvalidInput("exponential fit needs at least 3 points".into()));
    }
    if z.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput("heights must be finite and non-negative".into()));
    }
    if counts.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::InvalidInput("counts must be finite and positive".into()));
    }
    let z_ref = z.iter().copied().fold(0.0, f64::max);
    if !(z_ref > 0.0) || z.iter().all(|v| *v == z[0]) {
        return Err(Error::InvalidInput(
            "exponential fit needs at least two distinct heights".into(),
        ));
    }
    let c_ref = counts.iter().copied().fold(0.0, f64::max);
    let x: Vec<f64> = z.iter().map(|v| v / z_ref).collect();
    let y: Vec<f64> = counts.iter().map(|c| c / c_ref).collect();

    let n = x.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rate0 = (-slope).max(0.0);
    let amp0 = (my + rate0 * mx).exp();

    let bounds = Bounds::new(vec![0.0, 0.0], vec![f64::INFINITY, f64::INFINITY])?;
    let res = nlls_fit(
        |p| {
            x.iter()
                .zip(&y)
                .map(|(&xi, &yi)| p[0] * (-p[1] * xi).exp() - yi)
                .collect()
        },
        &[amp0, rate0],
        Some(&bounds),
        &NllsOptions::default(),
    )?;
    let amplitude = res.params[0] * c_ref;
    let rate = res.params[1] / z_ref;
    let covariance = res.covariance.as_ref().map(|c| {
        let s = [c_ref, 1.0 / z_ref];
        (0..2)
            .map(|i| (0..2).map(|j| c[i][j] * s[i] * s[j]).collect())
            .collect()
    });
    Ok(ExponentialFit {
        model: ExponentialModel {
            amplitude,
            decay_length: if rate > 0.0 { 1.0 / rate } else { f64::INFINITY },
        },
        covariance,
        diagnostics: FitDiagnostics::from(&res),
    })
}

/// One downward-transport measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPoint {
    /// Final transport distance, `≤ 0` for downward transport.
    pub dz: f64,
    pub counts: f64,
    /// Standard error of the mean count, if known.
    pub error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportFitOptions {
    /// Configurations averaged for the reported model band.
    pub n_configs: usize,
    pub seed: u64,
    /// Starting `(n̄, z_max)`; estimated from the data when absent.
    pub initial: Option<(f64, f64)>,
}

impl Default for TransportFitOptions {
    fn default() -> Self {
        Self {
            n_configs: 100,
            seed: 0,
            initial: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportModelPoint {
    pub dz: f64,
    pub data: f64,
    /// Expected counts at the fitted parameters.
    pub model: f64,
    /// Mean over the sampled configurations and its standard error.
    pub ensemble_mean: f64,
    pub ensemble_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportFitResult {
    pub n_bar: f64,
    pub z_max: f64,
    /// `round(z_max / (λ_t / 2))`.
    pub i_max: usize,
    pub residual_norm: f64,
    /// Covariance of `(n̄, z_max)`.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub points: Vec<TransportModelPoint>,
    pub seed: u64,
    pub n_configs: usize,
    pub diagnostics: FitDiagnostics,
}

/// Lattice site spacing `λ_t / 2`.
fn spacing(lambda_t: f64) -> f64 {
    0.5 * lambda_t
}

/// Expected counts after transport by `dz` with Poisson-mean `n_bar` atoms on
/// sites `i·d`, `i` uniform on `1..=x` (`x = z_max / d`).
///
/// A fractional `x` gives the last site the weight `x - ⌊x⌋`, so the
/// expectation is continuous in `z_max` and equals the discrete lattice average
/// at whole site counts.
pub fn transport_expected_counts(
    model: &ExponentialModel,
    background: f64,
    n_bar: f64,
    z_max: f64,
    lambda_t: f64,
    dz: f64,
) -> f64 {
    let d = spacing(lambda_t);
    let x = z_max / d;
    if !(x > 0.0) || n_bar == 0.0 {
        return background;
    }
    let whole = x.floor() as usize;
    let mut sum: f64 = (1..=whole).map(|i| model.eval(i as f64 * d + dz)).sum();
    sum += (x - whole as f64) * model.eval((whole + 1) as f64 * d + dz);
    background + n_bar * sum / x
}

/// Average over `n_configs` sampled configurations: `n ~ Poisson(n_bar)` atoms
/// on sites drawn uniformly from `1..=i_max`, each configuration transported
/// through every `dz`. Returns `(mean, standard error)` per `dz`.
pub fn transport_ensemble(
    model: &ExponentialModel,
    background: f64,
    n_bar: f64,
    z_max: f64,
    lambda_t: f64,
    dzs: &[f64],
    n_configs: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let d = spacing(lambda_t);
    let i_max = (z_max / d).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = (n_bar > 0.0).then(|| Poisson::new(n_bar).expect("positive mean"));
    let mut sums = vec![0.0; dzs.len()];
    let mut squares = vec![0.0; dzs.len()];
    for _ in 0..n_configs {
        let n = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let sites: Vec<f64> = (0..n).map(|_| rng.random_range(1..=i_max) as f64 * d).collect();
        for (k, dz) in dzs.iter().enumerate() {
            let v: f64 = sites.iter().map(|z| model.eval(z + dz)).sum();
            sums[k] += v;
            squares[k] += v * v;
        }
    }
    let m = n_configs.max(1) as f64;
    sums.iter()
        .zip(&squares)
        .map(|(s, q)| {
            let mean = s / m;
            let var = if n_configs > 1 {
                ((q - m * mean * mean) / (m - 1.0)).max(0.0)
            } else {
                0.0
            };
            (background + mean, (var / m).sqrt())
        })
        .collect()
}

/// Synthetic downward-transport data: each of `repetitions` shots draws a new
/// configuration as in [`transport_ensemble`] and adds Gaussian read noise of
/// standard deviation `noise`. Points carry the standard error of the mean.
pub fn synth_transport_data(
    model: &ExponentialModel,
    background: f64,
    n_bar: f64,
    z_max: f64,
    lambda_t: f64,
    dzs: &[f64],
    repetitions: usize,
    noise: f64,
    seed: u64,
) -> Vec<TransportPoint> {
    let d = spacing(lambda_t);
    let i_max = (z_max / d).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = (n_bar > 0.0).then(|| Poisson::new(n_bar).expect("positive mean"));
    dzs.iter()
        .map(|&dz| {
            let shots: Vec<f64> = (0..repetitions)
                .map(|_| {
                    let n = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
                    let atoms: f64 = (0..n)
                        .map(|_| model.eval(rng.random_range(1..=i_max) as f64 * d + dz))
                        .sum();
                    let e: f64 = StandardNormal.sample(&mut rng);
                    background + atoms + noise * e
                })
                .collect();
            let m = repetitions as f64;
            let mean = shots.iter().sum::<f64>() / m;
            let var = shots.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            TransportPoint {
                dz,
                counts: mean,
                error: Some((var / m).sqrt().max(f64::MIN_POSITIVE)),
            }
        })
        .collect()
}

/// Least-squares fit of `(n̄, z_max)` to downward-transport counts.
///
/// The objective uses [`transport_expected_counts`], the exact ensemble mean,
/// so that it is smooth in both parameters. The reported band at the fitted
/// parameters comes from [`transport_ensemble`] with `options.n_configs`
/// configurations.
pub fn fit_transport_ensemble(
    data: &[TransportPoint],
    model: &ExponentialModel,
    background: f64,
    lambda_t: f64,
    options: &TransportFitOptions,
) -> Result<TransportFitResult> {
    if data.len() < 3 {
        return Err(Error::InvalidInput("transport fit needs at least 3 points".into()));
    }
    if data.iter().any(|p| !(p.dz <= 0.0) || !p.counts.is_finite()) {
        return Err(Error::InvalidInput("transport data must be finite with dz <= 0".into()));
    }
    if data.iter().any(|p| p.error.is_some_and(|e| !(e > 0.0))) {
        return Err(Error::InvalidInput("measurement errors must be positive".into()));
    }
    if !(model.amplitude > 0.0 && model.decay_length > 0.0) || !(lambda_t > 0.0) || !background.is_finite() {
        return Err(Error::InvalidInput(
            "invalid count model, background or wavelength".into(),
        ));
    }
    if options.n_configs == 0 {
        return Err(Error::InvalidInput("n_configs must be positive".into()));
    }
    let d = spacing(lambda_t);
    let (n0, x0) = match options.initial {
        Some((n, z)) => (n, z / d),
        None => {
            let excess: Vec<f64> = data.iter().map(|p| p.counts - background).collect();
            let top = excess.iter().copied().fold(0.0, f64::max);
            let deepest = data.iter().map(|p| -p.dz).fold(0.0, f64::max);
            let reach = data
                .iter()
                .zip(&excess)
                .filter(|(_, e)| **e > 0.1 * top)
                .map(|(p, _)| -p.dz)
                .fold(0.0, f64::max);
            let x0 = ((reach.max(d) + d) / d).min(deepest / d + 1.0).max(1.0);
            let nearest = data
                .iter()
                .zip(&excess)
                .min_by(|a, b| b.0.dz.total_cmp(&a.0.dz))
                .unwrap();
            let per_atom = transport_expected_counts(model, 0.0, 1.0, x0 * d, lambda_t, nearest.0.dz);
            let n0 = if per_atom > 0.0 {
                (nearest.1 / per_atom).clamp(0.01, 100.0)
            } else {
                1.0
            };
            (n0, x0)
        }
    };
    let bounds = Bounds::new(vec![0.0, 1.0], vec![1e3, 1e5])?;
    let mut init = [n0, x0];
    for (v, (l, u)) in init.iter_mut().zip(bounds.lower.iter().zip(&bounds.upper)) {
        *v = v.clamp(*l, *u);
    }
    let weight = |p: &TransportPoint| 1.0 / p.error.unwrap_or(1.0);
    let opts = NllsOptions {
        parameter_scale: Some(vec![1.0, x0.max(1.0)]),
        scale_covariance: data.iter().any(|p| p.error.is_none()),
        ..Default::default()
    };
    let res = nlls_fit(
        |p| {
            data.iter()
                .map(|pt| {
                    (transport_expected_counts(model, background, p[0], p[1] * d, lambda_t, pt.dz) - pt.counts)
                        * weight(pt)
                })
                .collect()
        },
        &init,
        Some(&bounds),
        &opts,
    )?;
    let (n_bar, z_max) = (res.params[0], res.params[1] * d);
    let dzs: Vec<f64> = data.iter().map(|p| p.dz).collect();
    let band = transport_ensemble(
        model,
        background,
        n_bar,
        z_max,
        lambda_t,
        &dzs,
        options.n_configs,
        options.seed,
    );
    let points = data
        .iter()
        .zip(band)
        .map(|(p, (mean, err))| TransportModelPoint {
            dz: p.dz,
            data: p.counts,
            model: transport_expected_counts(model, background, n_bar, z_max, lambda_t, p.dz),
            ensemble_mean: mean,
            ensemble_error: err,
        })
        .collect();
    let covariance = res
        .covariance
        .as_ref()
        .map(|c| vec![vec![c[0][0], c[0][1] * d], vec![c[1][0] * d, c[1][1] * d * d]]);
    Ok(TransportFitResult {
        n_bar,
        z_max,
        i_max: (z_max / d).round() as usize,
        residual_norm: res.cost.sqrt(),
        covariance,
        points,
        seed: options.seed,
        n_configs: options.n_configs,
        diagnostics: FitDiagnostics::from(&res),
    })
}
