//! Background-only and composite-Gaussian fits of fluorescence count histograms.

use std::f64::consts::PI;

use puruspe::erf;
use serde::{Deserialize, Serialize};

use super::nlls::{nlls_fit, Bounds, NllsOptions, NllsResult};
use super::occupancy::OccupancyStats;
use super::FitDiagnostics;
use crate::imaging::CountHistogram;
use crate::{Error, Result};

/// Number-resolved composite Gaussian:
///
/// `C(I) = π^{-1/2} [ P0/w_bg · exp(-(I - I_bg)²/w_bg²)
///        + Σ_{n≥1} Pn/(w √(n I_a + I_bg)) · exp(-(I - n I_a - I_bg)² / (w² (n I_a + I_bg))) ]`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeGaussianParams {
    /// `P_n` for `n = 0..=n_max`, in shots.
    pub occurrences: Vec<f64>,
    pub i_bg: f64,
    pub w_bg: f64,
    pub i_a: f64,
    pub w: f64,
}

impl CompositeGaussianParams {
    pub fn new(occurrences: Vec<f64>, i_bg: f64, w_bg: f64, i_a: f64, w: f64) -> Result<Self> {
        let p = Self {
            occurrences,
            i_bg,
            w_bg,
            i_a,
            w,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.occurrences.is_empty() || self.occurrences.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput(
                "occurrences must be finite and non-negative".into(),
            ));
        }
        if !self.i_bg.is_finite() {
            return Err(Error::NonFinite("I_bg"));
        }
        if !(self.i_a > 0.0 && self.w_bg > 0.0 && self.w > 0.0) || !(self.i_a.is_finite() && self.w.is_finite()) {
            return Err(Error::InvalidInput("I_a and both widths must be positive".into()));
        }
        if self.i_bg + self.i_a <= 0.0 {
            return Err(Error::InvalidInput("n I_a + I_bg must be positive".into()));
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.occurrences.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.occurrences.iter().sum()
    }

    pub fn peak_mean(&self, n: usize) -> f64 {
        self.i_bg + n as f64 * self.i_a
    }

    /// The `1/e` half-width entering the exponent.
    pub fn peak_width(&self, n: usize) -> f64 {
        if n == 0 {
            self.w_bg
        } else {
            self.w * self.peak_mean(n).sqrt()
        }
    }

    /// Standard deviation of peak `n`.
    pub fn peak_sigma(&self, n: usize) -> f64 {
        self.peak_width(n) / 2f64.sqrt()
    }

    /// `C(I)`, occurrences per unit count.
    pub fn density(&self, i: f64) -> f64 {
        self.occurrences
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let w = self.peak_width(n);
                p / w * (-(i - self.peak_mean(n)).powi(2) / (w * w)).exp()
            })
            .sum::<f64>()
            / PI.sqrt()
    }

    /// Expected occurrences between `lo` and `hi`.
    pub fn bin_occurrence(&self, lo: f64, hi: f64) -> f64 {
        self.occurrences
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let (m, w) = (self.peak_mean(n), self.peak_width(n));
                0.5 * p * (erf((hi - m) / w) - erf((lo - m) / w))
            })
            .sum()
    }

    pub fn occupancy(&self) -> Result<OccupancyStats> {
        OccupancyStats::from_occurrences(&self.occurrences)
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.occurrences.clone();
        v.extend([self.i_bg, self.w_bg, self.i_a, self.w]);
        v
    }

    fn from_slice(p: &[f64]) -> Self {
        let k = p.len() - 4;
        Self {
            occurrences: p[..k].to_vec(),
            i_bg: p[k],
            w_bg: p[k + 1],
            i_a: p[k + 2],
            w: p[k + 3],
        }
    }
}

/// Signed square root of the Poisson deviance of `observed` given `expected`.
fn deviance_residual(observed: f64, expected: f64) -> f64 {
    let m = expected.max(1e-12);
    let d = if observed > 0.0 {
        let x = (m - observed) / observed;
        2.0 * observed * (x - x.ln_1p())
    } else {
        2.0 * m
    };
    d.max(0.0).sqrt().copysign(observed - m)
}

fn smooth(values: &[u64], half: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            values[lo..=hi].iter().sum::<u64>() as f64 / (hi - lo + 1) as f64
        })
        .collect()
}

/// Local maximum over `±reach` bins.
fn is_peak(s: &[f64], i: usize, reach: usize) -> bool {
    let lo = i.saturating_sub(reach);
    let hi = (i + reach).min(s.len() - 1);
    s[i] > 0.0 && s[lo..=hi].iter().all(|x| *x <= s[i])
}

const PEAK_REACH: usize = 3;
/// Minimum height of the background peak relative to the tallest smoothed bin.
const BACKGROUND_PEAK_FRACTION: f64 = 0.25;
/// Minimum height of the first atom peak relative to the tallest smoothed bin.
const ATOM_PEAK_FRACTION: f64 = 0.08;

struct Mode {
    index: usize,
    center: f64,
    height: f64,
    width: f64,
}

/// Lowest-count prominent peak of the lightly smoothed histogram.
fn background_mode(h: &CountHistogram) -> Result<Mode> {
    let s = smooth(&h.occurrences, 1);
    let top = s.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::NoBackgroundMode);
    }
    let index = (0..s.len())
        .find(|&i| s[i] >= BACKGROUND_PEAK_FRACTION * top && is_peak(&s, i, PEAK_REACH))
        .ok_or(Error::NoBackgroundMode)?;
    let centers = h.centers();
    let half = 0.5 * s[index];
    // Half-maximum crossing on the low side, which atoms do not contaminate.
    let crossing = |range: &mut dyn Iterator<Item = usize>| {
        let mut prev = index;
        for i in range {
            if s[i] < half {
                let t = (s[prev] - half) / (s[prev] - s[i]);
                return Some((centers[prev] + t * (centers[i] - centers[prev]) - centers[index]).abs());
            }
            prev = i;
        }
        None
    };
    let hwhm = crossing(&mut (0..index).rev()).or_else(|| crossing(&mut (index + 1..s.len())));
    let bin = h.widths()[index];
    let width = hwhm.map_or(bin, |x| (x / 2f64.ln().sqrt()).max(0.5 * bin));
    Ok(Mode {
        index,
        center: centers[index],
        height: s[index],
        width,
    })
}

/// Single-Gaussian fit to the low-count side of a histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundFit {
    pub i_bg: f64,
    pub w_bg: f64,
    /// Fitted number of background-only shots.
    pub background_occurrence: f64,
    /// `P(n ≥ 1) = 1 - background_occurrence / n_shots`.
    pub p_loaded: f64,
    pub p_loaded_error: f64,
    pub mode: f64,
    /// Bins with centres below this count were fitted.
    pub cut: f64,
    pub fitted_bins: usize,
    pub diagnostics: FitDiagnostics,
}

/// Fits a Gaussian to the bins below the first local minimum after the
/// background peak, falling back to `mode + 2 w_bg` when there is none.
///
/// The background peak is the lowest-count peak reaching a quarter of the
/// tallest bin, so it is found even when an atom peak is taller.
pub fn fit_background(h: &CountHistogram) -> Result<BackgroundFit> {
    if h.n_shots == 0 || h.len() < 3 {
        return Err(Error::NoBackgroundMode);
    }
    let mode = background_mode(h)?;
    let s = smooth(&h.occurrences, 1);
    let centers = h.centers();
    let cut = (mode.index + 1..s.len().saturating_sub(1))
        .find(|&i| s[i] < 0.5 * mode.height && s[i] <= s[i - 1] && s[i] < s[i + 1])
        .map_or(mode.center + 2.0 * mode.width, |i| centers[i]);
    let mut last = centers.iter().take_while(|c| **c < cut).count();
    last = last.max((mode.index + 2).min(h.len()));
    if last < 3 {
        last = 3.min(h.len());
    }
    let edges = &h.bin_edges[..=last];
    let obs: Vec<f64> = h.occurrences[..last].iter().map(|&o| o as f64).collect();
    let n = h.n_shots as f64;
    let bin = h.widths()[mode.index];
    let a0 = (mode.height * PI.sqrt() * mode.width / bin).clamp(1.0, 2.0 * n);
    let lo_edge = h.bin_edges[0];
    let hi_edge = h.bin_edges[h.len()];
    let bounds = Bounds::new(
        vec![0.0, lo_edge, bin / 20.0],
        vec![2.0 * n, hi_edge, hi_edge - lo_edge],
    )?;
    let init = [a0, mode.center, mode.width.clamp(bin / 20.0, hi_edge - lo_edge)];
    let opts = NllsOptions {
        parameter_scale: Some(vec![n, mode.width, mode.width]),
        scale_covariance: false,
        ..Default::default()
    };
    let res = nlls_fit(
        |p| {
            edges
                .windows(2)
                .zip(&obs)
                .map(|(e, &o)| {
                    let m = 0.5 * p[0] * (erf((e[1] - p[1]) / p[2]) - erf((e[0] - p[1]) / p[2]));
                    deviance_residual(o, m)
                })
                .collect()
        },
        &init,
        Some(&bounds),
        &opts,
    )?;
    let a = res.params[0];
    let p_loaded = 1.0 - a / n;
    let binomial = (p_loaded.clamp(0.0, 1.0) * (1.0 - p_loaded.clamp(0.0, 1.0)) / n).sqrt();
    let fit_err = res.standard_errors().map_or(0.0, |e| e[0] / n);
    Ok(BackgroundFit {
        i_bg: res.params[1],
        w_bg: res.params[2],
        background_occurrence: a,
        p_loaded,
        p_loaded_error: fit_err.max(binomial),
        mode: mode.center,
        cut,
        fitted_bins: last,
        diagnostics: FitDiagnostics::from(&res),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeFit {
    pub params: CompositeGaussianParams,
    pub occupancy: OccupancyStats,
    /// Covariance in the order `P_0..P_nmax, I_bg, w_bg, I_a, w`.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub standard_errors: Option<Vec<f64>>,
    pub background: BackgroundFit,
    /// Initial guess handed to the optimizer.
    pub initial: CompositeGaussianParams,
    pub diagnostics: FitDiagnostics,
}

impl CompositeFit {
    pub fn nlls_parameters(&self) -> Vec<f64> {
        self.params.to_vec()
    }
}

/// Poisson-likelihood fit of the composite Gaussian with `n_max` atom peaks.
///
/// Initial values: background fit for `P_0, I_bg, w_bg`; `I_a` from the first
/// atom peak after the background cut (or `8 w_bg` without one); `w` from the
/// spread around that peak; `P_n` by assigning bins to the nearest peak.
pub fn fit_composite_gaussian(h: &CountHistogram, n_max: usize) -> Result<CompositeFit> {
    if n_max == 0 {
        return Err(Error::InvalidInput("composite fit needs n_max >= 1".into()));
    }
    let bg = fit_background(h)?;
    let centers = h.centers();
    let widths = h.widths();
    let bin = widths[0];
    let n = h.n_shots as f64;
    let lo_edge = h.bin_edges[0];
    let hi_edge = h.bin_edges[h.len()];
    let span = hi_edge - lo_edge;

    let half = ((0.5 * bg.w_bg / bin).round() as usize).max(1);
    let s = smooth(&h.occurrences, half);
    let top = s.iter().copied().fold(0.0, f64::max);
    let peak = (0..s.len()).find(|&i| {
        centers[i] > bg.cut.max(bg.i_bg + 2.0 * bg.w_bg)
            && s[i] >= (ATOM_PEAK_FRACTION * top).max(1.0)
            && is_peak(&s, i, PEAK_REACH.max(half))
    });
    let i_bg0 = bg.i_bg.max(1e-6);
    let (i_a0, w0) = match peak {
        Some(k) => {
            let i_a = centers[k] - i_bg0;
            let (mut sw, mut sx, mut sxx) = (0.0, 0.0, 0.0);
            for (c, &o) in centers.iter().zip(&h.occurrences) {
                if (c - centers[k]).abs() <= 0.5 * i_a {
                    let o = o as f64;
                    sw += o;
                    sx += o * c;
                    sxx += o * c * c;
                }
            }
            let var = if sw > 1.0 {
                (sxx / sw - (sx / sw).powi(2)).max(bin * bin)
            } else {
                bg.w_bg.powi(2)
            };
            (i_a, (2.0 * var).sqrt() / centers[k].max(1.0).sqrt())
        }
        None => (8.0 * bg.w_bg, bg.w_bg / i_bg0.max(1.0).sqrt()),
    };
    let obs: Vec<f64> = h.occurrences.iter().map(|&o| o as f64).collect();
    let attempt = |i_a0: f64, w0: f64| -> Result<(CompositeGaussianParams, NllsResult)> {
        let i_a0 = i_a0.clamp(bin, span);
        let mut p0 = vec![0.0; n_max + 1];
        p0[0] = bg.background_occurrence;
        for (c, &o) in centers.iter().zip(&h.occurrences) {
            if *c >= bg.cut {
                let k = ((c - i_bg0) / i_a0).round().clamp(1.0, n_max as f64) as usize;
                p0[k] += o as f64;
            }
        }
        for x in p0.iter_mut().skip(1) {
            *x = x.max(0.5);
        }
        let initial = CompositeGaussianParams {
            occurrences: p0,
            i_bg: i_bg0,
            w_bg: bg.w_bg,
            i_a: i_a0,
            w: w0.clamp(1e-6, 1e4),
        };
        let mut lower = vec![0.0; n_max + 1];
        let mut upper = vec![1.5 * n; n_max + 1];
        lower.extend([1e-6, bin / 20.0, bin, 1e-6]);
        upper.extend([hi_edge.max(1.0), span, span, 1e4]);
        let bounds = Bounds::new(lower, upper)?;
        let mut init = initial.to_vec();
        bounds.project(&mut init);
        let mut scale = vec![n / (n_max + 1) as f64; n_max + 1];
        scale.extend([bg.w_bg, bg.w_bg, i_a0, initial.w]);
        let opts = NllsOptions {
            parameter_scale: Some(scale),
            scale_covariance: false,
            ..Default::default()
        };
        let res = nlls_fit(
            |p| {
                let m = CompositeGaussianParams::from_slice(p);
                let mut r: Vec<f64> = h
                    .bin_edges
                    .windows(2)
                    .zip(&obs)
                    .map(|(e, &o)| deviance_residual(o, m.bin_occurrence(e[0], e[1])))
                    .collect();
                // Nothing was recorded outside the histogram range.
                r.push(deviance_residual(0.0, m.bin_occurrence(f64::NEG_INFINITY, lo_edge)));
                r.push(deviance_residual(0.0, m.bin_occurrence(hi_edge, f64::INFINITY)));
                r
            },
            &init,
            Some(&bounds),
            &opts,
        )?;
        Ok((initial, res))
    };
    // Restarts at half and double the spacing guard against fits that
    // interleave or merge the atom peaks.
    let mut best: Option<(CompositeGaussianParams, NllsResult)> = None;
    let mut first_err = None;
    for factor in [1.0, 2.0, 0.5] {
        match attempt(factor * i_a0, w0 / factor.sqrt()) {
            Ok(out) => {
                if best.as_ref().is_none_or(|b| out.1.cost < b.1.cost) {
                    best = Some(out);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let (initial, res) = match best {
        Some(b) => b,
        None => return Err(first_err.expect("at least one attempt ran")),
    };
    let params = CompositeGaussianParams::from_slice(&res.params);
    let occupancy = params.occupancy()?;
    Ok(CompositeFit {
        occupancy,
        covariance: res.covariance.clone(),
        standard_errors: res.standard_errors(),
        background: bg,
        initial,
        diagnostics: FitDiagnostics::from(&res),
        params,
    })
}
