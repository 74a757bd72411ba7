//! Fluorescence imaging forward model: photon budget, recoil heating, defocused
//! point-spread function with a membrane image dipole, and synthetic count
//! histograms.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use puruspe::Jn;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, LAMBDA_ATOM};
use crate::fit::CompositeGaussianParams;
use crate::quadrature::Rule;
use crate::{Error, Result};

/// EMCCD camera and collection optics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub adc_electrons_per_count: f64,
    pub em_gain: f64,
    pub quantum_efficiency: f64,
    pub optics_transmittance: f64,
    /// Fraction of emitted photons entering the objective.
    pub collection_fraction: f64,
    /// Pixel size referred to the object plane.
    pub pixel_pitch: f64,
    pub exposure: f64,
    /// Side of the square counting region, in pixels.
    pub counting_pixels: usize,
    pub numerical_aperture: f64,
    pub wavelength: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            adc_electrons_per_count: 3.0,
            em_gain: 30.0,
            quantum_efficiency: 0.5,
            optics_transmittance: 0.15,
            collection_fraction: 0.03,
            pixel_pitch: 800e-9,
            exposure: 30e-3,
            counting_pixels: 6,
            numerical_aperture: 0.35,
            wavelength: LAMBDA_ATOM,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.adc_electrons_per_count,
            self.em_gain,
            self.pixel_pitch,
            self.exposure,
            self.wavelength,
        ];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidInput(
                "camera parameters must be finite and positive".into(),
            ));
        }
        let fractions = [
            self.quantum_efficiency,
            self.optics_transmittance,
            self.collection_fraction,
        ];
        if !fractions.iter().all(|v| *v > 0.0 && *v <= 1.0) {
            return Err(Error::InvalidInput(
                "QE, transmittance and collection fraction must lie in (0, 1]".into(),
            ));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < 1.0) {
            return Err(Error::InvalidInput("numerical aperture must lie in (0, 1)".into()));
        }
        if self.counting_pixels == 0 {
            return Err(Error::InvalidInput(
                "counting area must contain at least one pixel".into(),
            ));
        }
        Ok(())
    }

    /// Camera counts per emitted photon.
    pub fn counts_per_photon(&self) -> f64 {
        self.em_gain * self.quantum_efficiency * self.optics_transmittance * self.collection_fraction
            / self.adc_electrons_per_count
    }

    /// Half-width of the counting square in the object plane.
    pub fn counting_half_width(&self) -> f64 {
        0.5 * self.counting_pixels as f64 * self.pixel_pitch
    }

    /// `k NA`, converting object-plane radius to the optical coordinate `v`.
    pub fn lateral_scale(&self) -> f64 {
        2.0 * PI / self.wavelength * self.numerical_aperture
    }

    /// Optical defocus coordinate `u = k NA² z`.
    pub fn defocus_parameter(&self, z: f64) -> f64 {
        2.0 * PI / self.wavelength * self.numerical_aperture.powi(2) * z
    }
}

/// Emitted photon number giving `counts` camera counts.
pub fn photons_from_counts(counts: f64, camera: &CameraModel) -> Result<f64> {
    if !(counts >= 0.0) || !counts.is_finite() {
        return Err(Error::InvalidInput("counts must be finite and non-negative".into()));
    }
    Ok(counts / camera.counts_per_photon())
}

pub fn counts_from_photons(photons: f64, camera: &CameraModel) -> Result<f64> {
    if !(photons >= 0.0) || !photons.is_finite() {
        return Err(Error::InvalidInput(
            "photon number must be finite and non-negative".into(),
        ));
    }
    Ok(photons * camera.counts_per_photon())
}

/// Temperature rise `(2/3) N_p E_R / k_B` from `photons` recoil kicks.
pub fn recoil_heating(photons: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(photons >= 0.0) || !photons.is_finite() {
        return Err(Error::InvalidInput(
            "photon number must be finite and non-negative".into(),
        ));
    }
    Ok(2.0 / 3.0 * photons * constants.recoil_energy() / constants.boltzmann)
}

fn pupil_rules() -> &'static [Rule] {
    static RULES: OnceLock<Vec<Rule>> = OnceLock::new();
    RULES.get_or_init(|| [64, 256, 1024, 4096].iter().map(|&n| Rule::new(n, 0.0, 1.0)).collect())
}

/// Paraxial defocused amplitude `h(u, v) = 2 ∫₀¹ J0(vρ) exp(-i u ρ²/2) ρ dρ`,
/// normalized so that `h(0, 0) = 1`.
pub fn psf_amplitude(u: f64, v: f64) -> Complex64 {
    let need = 24.0 + 1.5 * (v.abs() + 0.5 * u.abs());
    let rules = pupil_rules();
    let rule = rules
        .iter()
        .find(|r| r.len() as f64 >= need)
        .unwrap_or(&rules[rules.len() - 1]);
    let mut acc = Complex64::new(0.0, 0.0);
    for (&rho, &w) in rule.nodes.iter().zip(&rule.weights) {
        let phase = -0.5 * u * rho * rho;
        acc += Complex64::from_polar(w * Jn(0, v * rho) * rho, phase);
    }
    2.0 * acc
}

pub fn psf_intensity(u: f64, v: f64) -> f64 {
    psf_amplitude(u, v).norm_sqr()
}

const RADIAL_ORDER: usize = 96;

/// Fraction of the image-plane power inside a circle of optical radius `v_max`.
/// The whole plane carries `∫ |h|² v dv = 2`.
pub fn encircled_fraction(u: f64, v_max: f64) -> f64 {
    let order = RADIAL_ORDER.max((4.0 * v_max) as usize);
    let rule = Rule::new(order, 0.0, v_max);
    0.5 * rule.integrate(|v| psf_intensity(u, v) * v)
}

/// Fraction of the image-plane power inside the centred square of optical
/// half-width `b`.
pub fn square_fraction(u: f64, b: f64) -> f64 {
    // Arc length of the circle of radius v inside the square.
    let inner = Rule::new(RADIAL_ORDER, 0.0, b);
    let outer = Rule::new(RADIAL_ORDER, b, b * 2f64.sqrt());
    let arc = |v: f64| {
        if v <= b {
            2.0 * PI * v
        } else {
            2.0 * PI * v - 8.0 * v * (b / v).min(1.0).acos()
        }
    };
    let f = |v: f64| psf_intensity(u, v) * arc(v);
    (inner.integrate(f) + outer.integrate(f)) / (4.0 * PI)
}

/// Fraction of collected light from an emitter at height `z` (focal plane at the
/// surface) landing in the counting square.
pub fn area_capture_fraction(z: f64, camera: &CameraModel) -> f64 {
    let b = camera.lateral_scale() * camera.counting_half_width();
    square_fraction(camera.defocus_parameter(z), b)
}

/// Expected counts in the counting area for an atom at `atom_z` scattering
/// `photons`, including the image dipole at `-atom_z` weighted by `r_membrane`.
pub fn defocused_counts(atom_z: f64, camera: &CameraModel, r_membrane: f64, photons: f64) -> Result<f64> {
    camera.validate()?;
    if !(atom_z >= 0.0) || !atom_z.is_finite() {
        return Err(Error::InvalidInput(
            "atom height must be finite and non-negative".into(),
        ));
    }
    if !(0.0..=1.0).contains(&r_membrane) {
        return Err(Error::InvalidInput("membrane reflectance must lie in [0, 1]".into()));
    }
    let total = counts_from_photons(photons, camera)?;
    let direct = area_capture_fraction(atom_z, camera);
    let image = if r_membrane > 0.0 {
        r_membrane * area_capture_fraction(-atom_z, camera)
    } else {
        0.0
    };
    Ok(total * (direct + image))
}

/// Binned count occurrences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bin_edges: Vec<f64>,
    pub occurrences: Vec<u64>,
    pub n_shots: u64,
}

impl CountHistogram {
    pub fn new(bin_edges: Vec<f64>, occurrences: Vec<u64>) -> Result<Self> {
        if bin_edges.len() < 2 || occurrences.len() + 1 != bin_edges.len() {
            return Err(Error::InvalidInput(
                "histogram needs n + 1 edges for n bins (n >= 1)".into(),
            ));
        }
        if bin_edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("histogram edges"));
        }
        if !bin_edges.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput(
                "histogram edges must be strictly increasing".into(),
            ));
        }
        let n_shots = occurrences.iter().sum();
        Ok(Self {
            bin_edges,
            occurrences,
            n_shots,
        })
    }

    /// Bins `samples` on uniform bins of width `bin_width` aligned to multiples
    /// of the width and covering every sample.
    pub fn from_samples(samples: &[f64], bin_width: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("no samples to bin".into()));
        }
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::InvalidInput("bin width must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("histogram samples"));
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = (lo / bin_width).floor() as i64;
        let n = ((hi / bin_width).floor() as i64 - first + 1) as usize;
        let edges = (0..=n).map(|i| (first + i as i64) as f64 * bin_width).collect();
        let mut occ = vec![0u64; n];
        for &s in samples {
            let i = ((s / bin_width).floor() as i64 - first).clamp(0, n as i64 - 1) as usize;
            occ[i] += 1;
        }
        Self::new(edges, occ)
    }

    pub fn len(&self) -> usize {
        self.occurrences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occurrences.is_empty()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Distribution of the atom number per shot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyLaw {
    /// `P(n)` for `n = 0, 1, ...`; normalized on use.
    Probabilities(Vec<f64>),
    Poisson {
        mean: f64,
    },
}

impl OccupancyLaw {
    /// Poisson weights restricted to `0..=n_max` and renormalized.
    pub fn truncated_poisson(mean: f64, n_max: usize) -> Self {
        let mut w = Vec::with_capacity(n_max + 1);
        let mut term = 1.0;
        for n in 0..=n_max {
            if n > 0 {
                term *= mean / n as f64;
            }
            w.push(term);
        }
        let z: f64 = w.iter().sum();
        Self::Probabilities(w.into_iter().map(|x| x / z).collect())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Probabilities(p) => {
                if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::InvalidInput(
                        "occupancy probabilities must be non-negative".into(),
                    ));
                }
                if !(p.iter().sum::<f64>() > 0.0) {
                    return Err(Error::InvalidInput("occupancy probabilities sum to zero".into()));
                }
            }
            Self::Poisson { mean } => {
                if !(mean.is_finite() && *mean >= 0.0) {
                    return Err(Error::InvalidInput("Poisson mean must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Probabilities(p) => {
                let total: f64 = p.iter().sum();
                p.iter().enumerate().map(|(n, x)| n as f64 * x).sum::<f64>() / total
            }
            Self::Poisson { mean } => *mean,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        match self {
            Self::Probabilities(p) => {
                let total: f64 = p.iter().sum();
                let mut x = rng.random::<f64>() * total;
                for (n, w) in p.iter().enumerate() {
                    if x < *w {
                        return n;
                    }
                    x -= w;
                }
                p.iter().rposition(|w| *w > 0.0).unwrap_or(0)
            }
            Self::Poisson { mean } => {
                if *mean == 0.0 {
                    0
                } else {
                    Poisson::new(*mean).map_or(0, |d| d.sample(rng) as usize)
                }
            }
        }
    }
}

/// Draws one count per shot: occupancy from `law`, then a Gaussian of mean
/// `n I_a + I_bg` with the composite-model width. Occurrences in `params` are
/// not used; `law` decides the occupancy.
pub fn synth_counts(
    params: &CompositeGaussianParams,
    law: &OccupancyLaw,
    n_shots: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    params.validate()?;
    law.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_shots)
        .map(|_| {
            let n = law.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            params.peak_mean(n) + params.peak_sigma(n) * z
        })
        .collect())
}

/// [`synth_counts`] binned at `bin_width`.
pub fn synth_histogram(
    params: &CompositeGaussianParams,
    law: &OccupancyLaw,
    n_shots: usize,
    bin_width: f64,
    seed: u64,
) -> Result<CountHistogram> {
    CountHistogram::from_samples(&synth_counts(params, law, n_shots, seed)?, bin_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn waveguide() -> CompositeGaussianParams {
        CompositeGaussianParams::new(vec![1.0, 0.0, 0.0, 0.0], 370.0, 134.0, 1037.0, 11.0).unwrap()
    }

    #[test]
    fn photon_budget() {
        let cam = CameraModel::default();
        let n = photons_from_counts(1000.0, &cam).unwrap();
        assert_relative_eq!(n, 1000.0 * 3.0 / (30.0 * 0.5 * 0.15 * 0.03), max_relative = 1e-14);
        assert_relative_eq!(n, 44_444.444_444, max_relative = 1e-9);
        assert_eq!(photons_from_counts(0.0, &cam).unwrap(), 0.0);
        for c in [0.5, 17.0, 1037.0, 3.3e6] {
            let back = counts_from_photons(photons_from_counts(c, &cam).unwrap(), &cam).unwrap();
            assert_relative_eq!(back, c, max_relative = 1e-12);
        }
        assert!(photons_from_counts(-1.0, &cam).is_err());
    }

    #[test]
    fn recoil_heating_budget() {
        let c = PhysicalConstants::default();
        let er_over_kb = c.recoil_energy() / c.boltzmann;
        assert!((er_over_kb - 99e-9).abs() < 1e-9, "E_R/k_B = {er_over_kb}");
        let dt = recoil_heating(45_000.0, &c).unwrap();
        assert!((dt - 2.97e-3).abs() < 0.05e-3, "{dt}");
        assert_eq!(recoil_heating(0.0, &c).unwrap(), 0.0);
        assert_relative_eq!(
            recoil_heating(2.0 * 45_000.0, &c).unwrap(),
            2.0 * dt,
            max_relative = 1e-14
        );
    }

    #[test]
    fn in_focus_psf_is_airy() {
        for v in [0.0, 0.3, 1.0, 2.5, 3.8317, 7.0, 12.0, 40.0] {
            let airy = if v == 0.0 { 1.0 } else { (2.0 * Jn(1, v) / v).powi(2) };
            assert!((psf_intensity(0.0, v) - airy).abs() < 1e-12, "v = {v}");
        }
    }

    #[test]
    fn on_axis_defocus_is_sinc_squared() {
        for u in [0.5, 2.0, 4.0 * PI, 9.0, 20.0] {
            let x = u / 4.0;
            let expected = (x.sin() / x).powi(2);
            assert!((psf_intensity(u, 0.0) - expected).abs() < 1e-12, "u = {u}");
            assert_relative_eq!(psf_intensity(u, 1.3), psf_intensity(-u, 1.3), max_relative = 1e-12);
        }
    }

    #[test]
    fn encircled_energy_matches_airy_formula() {
        for v in [1.0, 3.8317, 6.0, 10.0] {
            let exact = 1.0 - Jn(0, v).powi(2) - Jn(1, v).powi(2);
            assert!((encircled_fraction(0.0, v) - exact).abs() < 1e-9, "v = {v}");
        }
    }

    #[test]
    fn total_power_is_defocus_independent() {
        let reference = encircled_fraction(0.0, 300.0);
        for u in [2.0, 5.0, 10.0, 15.0] {
            let f = encircled_fraction(u, 300.0);
            assert!((f / reference - 1.0).abs() < 5e-3, "u = {u}: {f} vs {reference}");
        }
    }

    #[test]
    fn square_contains_the_inscribed_circle() {
        for u in [0.0, 4.0, 12.0] {
            let b = 6.0;
            let sq = square_fraction(u, b);
            assert!(sq > encircled_fraction(u, b));
            assert!(sq < encircled_fraction(u, b * 2f64.sqrt()));
        }
    }

    #[test]
    fn defocused_counts_behaviour() {
        let cam = CameraModel::default();
        let np = 45_000.0;
        let total = counts_from_photons(np, &cam).unwrap();
        let bare0 = defocused_counts(0.0, &cam, 0.0, np).unwrap();
        assert!(bare0 < total && bare0 > 0.5 * total);
        let with0 = defocused_counts(0.0, &cam, 0.3, np).unwrap();
        assert!(with0 < 1.3 * total);

        let zs: Vec<f64> = (0..=60).map(|i| i as f64 * 0.25e-6).collect();
        let c: Vec<f64> = zs
            .iter()
            .map(|&z| defocused_counts(z, &cam, 0.3, np).unwrap())
            .collect();
        for w in c.windows(2) {
            assert!(w[1] <= w[0] * 1.01, "{} -> {}", w[0], w[1]);
        }
        assert!(c[0] >= c.iter().copied().fold(0.0, f64::max));
        let ratio = defocused_counts(10e-6, &cam, 0.3, np).unwrap() / c[0];
        assert!(ratio > 0.3, "ratio at 10 um = {ratio}");

        for z in [0.0, 3e-6, 11e-6] {
            let bare = defocused_counts(z, &cam, 0.0, np).unwrap();
            assert_eq!(bare, total * area_capture_fraction(z, &cam));
        }
        assert!(defocused_counts(-1e-6, &cam, 0.3, np).is_err());
    }

    #[test]
    fn histogram_construction() {
        let h = CountHistogram::from_samples(&[0.0, 9.9, 10.0, 25.0, -3.0], 10.0).unwrap();
        assert_eq!(h.bin_edges, vec![-10.0, 0.0, 10.0, 20.0, 30.0]);
        assert_eq!(h.occurrences, vec![1, 2, 1, 1]);
        assert_eq!(h.n_shots, 5);
        assert!(CountHistogram::new(vec![0.0, 0.0], vec![1]).is_err());
        assert!(CountHistogram::new(vec![0.0, 1.0], vec![1, 2]).is_err());
    }

    #[test]
    fn background_only_synthesis_is_normal() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let p = waveguide();
        let law = OccupancyLaw::Probabilities(vec![1.0]);
        let mut x = synth_counts(&p, &law, 2000, 17).unwrap();
        x.sort_by(f64::total_cmp);
        let normal = Normal::new(370.0, 134.0 / 2f64.sqrt()).unwrap();
        let n = x.len() as f64;
        let d = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let f = normal.cdf(xi);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.358 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn occupancy_mean_is_reproduced() {
        let p = waveguide();
        for (law, seed) in [
            (OccupancyLaw::Poisson { mean: 0.45 }, 1),
            (OccupancyLaw::Poisson { mean: 1.0 }, 2),
            (OccupancyLaw::Probabilities(vec![0.3165, 0.5971, 0.08645]), 3),
        ] {
            let n_shots = 5000;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draws: Vec<f64> = (0..n_shots).map(|_| law.sample(&mut rng) as f64).collect();
            let mean = draws.iter().sum::<f64>() / n_shots as f64;
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n_shots - 1) as f64;
            let se = (var / n_shots as f64).sqrt();
            assert!((mean - law.mean()).abs() < 3.0 * se, "{law:?}: {mean}");
            let _ = synth_counts(&p, &law, 10, seed).unwrap();
        }
    }

    #[test]
    fn membrane_peaks_are_separated_by_the_single_atom_count() {
        let p = CompositeGaussianParams::new(vec![1.0, 1.0], 221.0, 138.0, 853.0, 8.4).unwrap();
        let counts = synth_counts(&p, &OccupancyLaw::Poisson { mean: 1.0 }, 20_000, 5).unwrap();
        // Split at the midpoint between the two peaks and compare peak means.
        let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0.0, 0.0, 0.0);
        for c in counts {
            if c < 221.0 + 0.5 * 853.0 {
                s0 += c;
                n0 += 1.0;
            } else if c < 221.0 + 1.5 * 853.0 {
                s1 += c;
                n1 += 1.0;
            }
        }
        let sep = s1 / n1 - s0 / n0;
        assert!((sep - 853.0).abs() < 0.03 * 853.0, "separation {sep}");
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let p = waveguide();
        let law = OccupancyLaw::Poisson { mean: 0.45 };
        assert_eq!(
            synth_counts(&p, &law, 100, 9).unwrap(),
            synth_counts(&p, &law, 100, 9).unwrap()
        );
        assert_ne!(
            synth_counts(&p, &law, 100, 9).unwrap(),
            synth_counts(&p, &law, 100, 10).unwrap()
        );
    }
}
