//! Scalar field of a focused tweezer above a layered stack, plus the
//! counter-propagating bottom beam.
//!
//! The trap beam is an angular spectrum of plane waves with polar angles up to
//! `asin(NA)` and a Gaussian pupil apodization `exp(-q²/κ²)` in transverse
//! wavenumber `q = k sin θ`. `κ` is solved so that the focal 1/e² intensity
//! radius equals the requested waist, and the amplitude is normalized so that the
//! transverse integral of `|E|²` equals the beam power. `|E|²` is intensity in W/m².
//!
//! Coordinates are cylindrical `(ρ, z)` with the top stack surface at `z = 0`
//! and atoms at `z > 0`. The tweezer comes from above and propagates towards `-z`.

use num_complex::Complex64;
use puruspe::Jn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::optics::{stack_response, LayerStack, Polarization};
use crate::quadrature::Rule;
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn j0(x: f64) -> f64 {
    Jn(0, x)
}

fn j1(x: f64) -> f64 {
    Jn(1, x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamDirection {
    TopDown,
    BottomUp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub wavelength: f64,
    pub power: f64,
    /// 1/e² intensity radius at focus.
    pub waist: f64,
    pub numerical_aperture: f64,
    pub direction: BeamDirection,
    pub frequency_offset: f64,
    pub phase_offset: f64,
}

impl BeamSpec {
    /// 935 nm tweezer, NA 0.35, 1.2 μm waist.
    pub fn tweezer(power: f64) -> Self {
        Self {
            wavelength: crate::constants::LAMBDA_TRAP,
            power,
            waist: 1.2e-6,
            numerical_aperture: 0.35,
            direction: BeamDirection::TopDown,
            frequency_offset: 0.0,
            phase_offset: 0.0,
        }
    }

    /// Weakly focused 7 μm bottom beam. `power` is the power incident on the
    /// stack from below.
    pub fn bottom(power: f64) -> Self {
        Self {
            wavelength: crate::constants::LAMBDA_TRAP,
            power,
            waist: 7e-6,
            numerical_aperture: 0.05,
            direction: BeamDirection::BottomUp,
            frequency_offset: 0.0,
            phase_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("beam: {msg}")));
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return bad("wavelength must be positive");
        }
        if !(self.power.is_finite() && self.power >= 0.0) {
            return bad("power must be non-negative");
        }
        if !(self.waist.is_finite() && self.waist > 0.0) {
            return bad("waist must be positive");
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < 1.0) {
            return bad("numerical aperture must lie in (0, 1)");
        }
        if !(self.frequency_offset.is_finite() && self.phase_offset.is_finite()) {
            return bad("offsets must be finite");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapConfiguration {
    pub top_beam: BeamSpec,
    pub bottom_beam: Option<BeamSpec>,
    pub stack: LayerStack,
    /// Axial position of the tweezer focus relative to the top surface.
    pub focus_offset: f64,
    /// Bottom-beam phase relative to the reflected tweezer, in cycles.
    pub relative_phase: f64,
    /// Multiplies every reflected amplitude; 1 for the bare stack.
    pub reflection_scale: f64,
}

impl TrapConfiguration {
    pub fn stationary(top_beam: BeamSpec, stack: LayerStack) -> Self {
        Self {
            top_beam,
            bottom_beam: None,
            stack,
            focus_offset: 0.0,
            relative_phase: 0.0,
            reflection_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.top_beam.validate()?;
        if self.top_beam.direction != BeamDirection::TopDown {
            return Err(Error::InvalidInput("top beam must propagate top-down".into()));
        }
        if let Some(b) = &self.bottom_beam {
            b.validate()?;
            if b.direction != BeamDirection::BottomUp {
                return Err(Error::InvalidInput("bottom beam must propagate bottom-up".into()));
            }
        }
        if !self.focus_offset.is_finite() || !self.relative_phase.is_finite() {
            return Err(Error::InvalidInput(
                "focus offset and relative phase must be finite".into(),
            ));
        }
        if !(self.reflection_scale.is_finite() && self.reflection_scale >= 0.0) {
            return Err(Error::InvalidInput("reflection scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Relative phase folded into `[0, 1)`.
    pub fn canonical_phase(&self) -> f64 {
        self.relative_phase.rem_euclid(1.0)
    }
}

/// Angular-spectrum representation of a focused beam in its own frame.
#[derive(Clone, Debug)]
pub struct FocusedBeam {
    spec: BeamSpec,
    k: f64,
    kappa: f64,
    sin: Vec<f64>,
    cos: Vec<f64>,
    weights: Vec<f64>,
}

const KAPPA_SOLVE_ORDER: usize = 256;
const MAX_ORDER: usize = 2048;
const QUADRATURE_TOLERANCE: f64 = 1e-6;

fn shape_weights(k: f64, rule: &Rule, kappa: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut sin = Vec::with_capacity(rule.len());
    let mut cos = Vec::with_capacity(rule.len());
    let mut weights = Vec::with_capacity(rule.len());
    for (&th, &w) in rule.nodes.iter().zip(&rule.weights) {
        let (s, c) = th.sin_cos();
        let q = k * s;
        sin.push(s);
        cos.push(c);
        // q dq = k² sin θ cos θ dθ
        weights.push(w * (-(q / kappa).powi(2)).exp() * k * k * s * c);
    }
    (sin, cos, weights)
}

fn spectrum_sum(k: f64, sin: &[f64], cos: &[f64], weights: &[f64], rho: f64, zeta: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for ((&s, &c), &w) in sin.iter().zip(cos).zip(weights) {
        let phase = Complex64::from_polar(1.0, -k * c * zeta);
        acc += w * j0(k * rho * s) * phase;
    }
    acc
}

fn focal_radius(k: f64, sin: &[f64], cos: &[f64], weights: &[f64], step: f64) -> f64 {
    let i0 = spectrum_sum(k, sin, cos, weights, 0.0, 0.0).norm_sqr();
    let target = (-2.0f64).exp();
    let ratio = |r: f64| spectrum_sum(k, sin, cos, weights, r, 0.0).norm_sqr() / i0 - target;
    let mut hi = step;
    while ratio(hi) > 0.0 {
        hi += step;
    }
    let mut lo = hi - step;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl FocusedBeam {
    pub fn new(spec: &BeamSpec) -> Result<Self> {
        spec.validate()?;
        let k = TWO_PI / spec.wavelength;
        let theta_max = spec.numerical_aperture.asin();
        let kappa = Self::solve_kappa(spec, k, theta_max)?;
        let order = Self::select_order(spec, k, theta_max, kappa)?;
        let rule = Rule::new(order, 0.0, theta_max);
        let (sin, cos, mut weights) = shape_weights(k, &rule, kappa);
        let q_max = k * spec.numerical_aperture;
        let norm = TWO_PI * kappa * kappa / 4.0 * (1.0 - (-2.0 * (q_max / kappa).powi(2)).exp());
        let amplitude = (spec.power / norm).sqrt();
        for w in &mut weights {
            *w *= amplitude;
        }
        Ok(Self {
            spec: spec.clone(),
            k,
            kappa,
            sin,
            cos,
            weights,
        })
    }

    fn solve_kappa(spec: &BeamSpec, k: f64, theta_max: f64) -> Result<f64> {
        let rule = Rule::new(KAPPA_SOLVE_ORDER, 0.0, theta_max);
        let step = 0.02 * spec.wavelength / spec.numerical_aperture;
        let waist_of = |kappa: f64| {
            let (s, c, w) = shape_weights(k, &rule, kappa);
            focal_radius(k, &s, &c, &w, step)
        };
        let guess = 2.0 / spec.waist;
        let (mut lo, mut hi) = (0.2 * guess, 1e3 * guess);
        if waist_of(hi) > spec.waist {
            return Err(Error::InvalidInput(format!(
                "waist {:.4e} m is below the diffraction limit {:.4e} m of NA {}",
                spec.waist,
                waist_of(hi),
                spec.numerical_aperture
            )));
        }
        if waist_of(lo) < spec.waist {
            return Err(Error::InvalidInput(
                "waist too large for the angular-spectrum model".into(),
            ));
        }
        for _ in 0..80 {
            let mid = (lo * hi).sqrt();
            if waist_of(mid) > spec.waist {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-12 {
                break;
            }
        }
        Ok((lo * hi).sqrt())
    }

    /// Smallest order whose doubling changes probe fields by less than the
    /// tolerance, over a ±30 μm, 7.2 μm radius region around focus.
    fn select_order(spec: &BeamSpec, k: f64, theta_max: f64, kappa: f64) -> Result<usize> {
        let probes: Vec<(f64, f64)> = [0.0, 3.6e-6, 7.2e-6]
            .iter()
            .flat_map(|&r| [-30e-6, -15e-6, 0.0, 15e-6, 30e-6].map(|z| (r, z)))
            .collect();
        let _ = spec;
        let eval = |order: usize| {
            let rule = Rule::new(order, 0.0, theta_max);
            let (s, c, w) = shape_weights(k, &rule, kappa);
            probes
                .iter()
                .map(|&(r, z)| spectrum_sum(k, &s, &c, &w, r, z))
                .collect::<Vec<_>>()
        };
        let mut order = 16;
        let mut previous = eval(order);
        let mut achieved = f64::INFINITY;
        while order < MAX_ORDER {
            let next = eval(order * 2);
            let scale = next[2].norm().max(1e-300);
            achieved = previous
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).norm() / scale)
                .fold(0.0, f64::max);
            order *= 2;
            if achieved < QUADRATURE_TOLERANCE {
                return Ok(order);
            }
            previous = next;
        }
        Err(Error::Quadrature { achieved, order })
    }

    pub fn spec(&self) -> &BeamSpec {
        &self.spec
    }

    /// Pupil apodization constant `κ` in rad/m.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn wavenumber(&self) -> f64 {
        self.k
    }

    /// `(sin θ_j, cos θ_j, W_j)` of the angular components.
    pub fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.sin
            .iter()
            .zip(&self.cos)
            .zip(&self.weights)
            .map(|((&s, &c), &w)| (s, c, w))
    }

    /// Field at radius `rho` and signed distance `zeta` from focus along the
    /// lab `z` axis.
    pub fn field(&self, rho: f64, zeta: f64) -> Complex64 {
        let zeta = match self.spec.direction {
            BeamDirection::TopDown => zeta,
            BeamDirection::BottomUp => -zeta,
        };
        spectrum_sum(self.k, &self.sin, &self.cos, &self.weights, rho, zeta)
    }
}

/// Value of the total field and the derivatives needed for smooth potentials.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSample {
    pub value: Complex64,
    pub d_rho: Complex64,
    pub d_z: Complex64,
    pub d_rho_z: Complex64,
}

impl FieldSample {
    pub fn intensity(&self) -> f64 {
        self.value.norm_sqr()
    }

    /// `[I, ∂ρ I, ∂z I, ∂ρ∂z I]`.
    pub fn intensity_derivatives(&self) -> [f64; 4] {
        let e = self.value;
        [
            e.norm_sqr(),
            2.0 * (e.conj() * self.d_rho).re,
            2.0 * (e.conj() * self.d_z).re,
            2.0 * (self.d_z.conj() * self.d_rho + e.conj() * self.d_rho_z).re,
        ]
    }
}

#[derive(Clone, Debug)]
struct BottomBeam {
    amplitude: Complex64,
    waist: f64,
    k: f64,
}

impl BottomBeam {
    fn sample(&self, rho: f64, z: f64) -> FieldSample {
        let w2 = self.waist * self.waist;
        let value = self.amplitude * (-rho * rho / w2).exp() * Complex64::from_polar(1.0, self.k * z);
        let g = -2.0 * rho / w2;
        let ik = Complex64::new(0.0, self.k);
        FieldSample {
            value,
            d_rho: g * value,
            d_z: ik * value,
            d_rho_z: g * ik * value,
        }
    }
}

/// Components of the field at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldComponents {
    pub incident: Complex64,
    pub reflected: Complex64,
    pub bottom: Complex64,
}

impl FieldComponents {
    pub fn total(&self) -> Complex64 {
        self.incident + self.reflected + self.bottom
    }
}

/// Precomputed field of a [`TrapConfiguration`].
#[derive(Clone, Debug)]
pub struct TrapField {
    beam: FocusedBeam,
    focus_offset: f64,
    reflection: Vec<Complex64>,
    bottom: Option<BottomBeam>,
    reflectance_normal: f64,
    bottom_transmittance: f64,
}

impl TrapField {
    pub fn new(config: &TrapConfiguration) -> Result<Self> {
        config.validate()?;
        let beam = FocusedBeam::new(&config.top_beam)?;
        let lambda = config.top_beam.wavelength;
        let mut reflection = Vec::with_capacity(beam.order());
        for (s, _, _) in beam.components() {
            let theta = s.asin();
            let rs = stack_response(&config.stack, lambda, theta, Polarization::S)?.r;
            let rp = stack_response(&config.stack, lambda, theta, Polarization::P)?.r;
            reflection.push(0.5 * (rs + rp) * config.reflection_scale);
        }
        let normal = stack_response(&config.stack, lambda, 0.0, Polarization::S)?;
        let mut field = Self {
            beam,
            focus_offset: config.focus_offset,
            reflection,
            bottom: None,
            reflectance_normal: normal.reflectance * config.reflection_scale.powi(2),
            bottom_transmittance: 0.0,
        };
        if let Some(spec) = &config.bottom_beam {
            let through = stack_response(&config.stack.reversed(), spec.wavelength, 0.0, Polarization::S)?;
            let reference = {
                let c = field.components(0.0, 0.0);
                if c.reflected.norm() > 0.0 {
                    c.reflected.arg()
                } else {
                    c.incident.arg()
                }
            };
            let peak = (2.0 * spec.power / (std::f64::consts::PI * spec.waist * spec.waist)).sqrt();
            let phase = reference - TWO_PI * config.relative_phase + spec.phase_offset;
            field.bottom_transmittance = through.transmittance;
            field.bottom = Some(BottomBeam {
                amplitude: Complex64::from_polar(peak * through.t.norm(), phase),
                waist: spec.waist,
                k: TWO_PI / spec.wavelength,
            });
        }
        Ok(field)
    }

    pub fn beam(&self) -> &FocusedBeam {
        &self.beam
    }

    /// Normal-incidence reflectance seen by the tweezer, including the scale.
    pub fn reflectance_normal(&self) -> f64 {
        self.reflectance_normal
    }

    /// Power transmittance of the stack for the bottom beam.
    pub fn bottom_transmittance(&self) -> f64 {
        self.bottom_transmittance
    }

    pub fn has_bottom_beam(&self) -> bool {
        self.bottom.is_some()
    }

    pub fn components(&self, rho: f64, z: f64) -> FieldComponents {
        let k = self.beam.k;
        let zf = self.focus_offset;
        let mut incident = Complex64::new(0.0, 0.0);
        let mut reflected = Complex64::new(0.0, 0.0);
        for ((s, c, w), r) in self.beam.components().zip(&self.reflection) {
            let j = w * j0(k * rho * s);
            incident += j * Complex64::from_polar(1.0, -k * c * (z - zf));
            reflected += j * r * Complex64::from_polar(1.0, k * c * (z + zf));
        }
        let bottom = self
            .bottom
            .as_ref()
            .map_or(Complex64::new(0.0, 0.0), |b| b.sample(rho, z).value);
        FieldComponents {
            incident,
            reflected,
            bottom,
        }
    }

    pub fn field(&self, rho: f64, z: f64) -> Complex64 {
        self.components(rho, z).total()
    }

    pub fn intensity(&self, rho: f64, z: f64) -> f64 {
        self.field(rho, z).norm_sqr()
    }

    /// Total field with its first radial, first axial and mixed derivatives.
    pub fn sample(&self, rho: f64, z: f64) -> FieldSample {
        let k = self.beam.k;
        let zf = self.focus_offset;
        let mut out = FieldSample::default();
        let i = Complex64::i();
        for ((s, c, w), r) in self.beam.components().zip(&self.reflection) {
            let a = w * j0(k * rho * s);
            let b = -w * k * s * j1(k * rho * s);
            let down = Complex64::from_polar(1.0, -k * c * (z - zf));
            let up = r * Complex64::from_polar(1.0, k * c * (z + zf));
            let sum = down + up;
            let dz = i * k * c * (up - down);
            out.value += a * sum;
            out.d_rho += b * sum;
            out.d_z += a * dz;
            out.d_rho_z += b * dz;
        }
        if let Some(bb) = &self.bottom {
            let s = bb.sample(rho, z);
            out.value += s.value;
            out.d_rho += s.d_rho;
            out.d_z += s.d_z;
            out.d_rho_z += s.d_rho_z;
        }
        out
    }

    /// Samples on a tensor grid, row-major with `z` fastest. Rows are filled in
    /// parallel; each value depends only on its own coordinates.
    pub fn sample_grid(&self, rhos: &[f64], zs: &[f64]) -> Vec<FieldSample> {
        let k = self.beam.k;
        let zf = self.focus_offset;
        let n = self.beam.order();
        let mut phases = Vec::with_capacity(zs.len() * n);
        for &z in zs {
            for (&c, r) in self.beam.cos.iter().zip(&self.reflection) {
                let down = Complex64::from_polar(1.0, -k * c * (z - zf));
                let up = r * Complex64::from_polar(1.0, k * c * (z + zf));
                phases.push((down + up, Complex64::new(0.0, k * c) * (up - down)));
            }
        }
        rhos.par_iter()
            .flat_map_iter(|&rho| {
                let radial: Vec<(f64, f64)> = self
                    .beam
                    .components()
                    .map(|(s, _, w)| (w * j0(k * rho * s), -w * k * s * j1(k * rho * s)))
                    .collect();
                let phases = &phases;
                zs.iter().enumerate().map(move |(iz, &z)| {
                    let mut out = FieldSample::default();
                    for (&(a, b), &(sum, dz)) in radial.iter().zip(&phases[iz * n..(iz + 1) * n]) {
                        out.value += a * sum;
                        out.d_rho += b * sum;
                        out.d_z += a * dz;
                        out.d_rho_z += b * dz;
                    }
                    if let Some(bb) = &self.bottom {
                        let s = bb.sample(rho, z);
                        out.value += s.value;
                        out.d_rho += s.d_rho;
                        out.d_z += s.d_z;
                        out.d_rho_z += s.d_rho_z;
                    }
                    out
                })
            })
            .collect()
    }
}

/// Complex amplitude on a cylindrical `(ρ, z)` grid, row-major with `z` fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    pub rho: Vec<f64>,
    pub z: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(rho: Vec<f64>, z: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !monotone(&rho) || !monotone(&z) {
            return Err(Error::InvalidInput("field grid must be strictly increasing".into()));
        }
        if values.len() != rho.len() * z.len() {
            return Err(Error::InvalidInput("field values do not match grid".into()));
        }
        Ok(Self { rho, z, values })
    }

    pub fn sample(field: &TrapField, rho: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let values = field.sample_grid(&rho, &z).into_iter().map(|s| s.value).collect();
        Self::new(rho, z, values)
    }

    pub fn at(&self, i_rho: usize, i_z: usize) -> Complex64 {
        self.values[i_rho * self.z.len() + i_z]
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// On-axis samples of `|E|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineCut {
    pub z: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl LineCut {
    /// Linear interpolation; clamps outside the sampled range.
    pub fn interpolate(&self, z: f64) -> f64 {
        let n = self.z.len();
        if z <= self.z[0] {
            return self.intensity[0];
        }
        if z >= self.z[n - 1] {
            return self.intensity[n - 1];
        }
        let i = self.z.partition_point(|&x| x <= z) - 1;
        let t = (z - self.z[i]) / (self.z[i + 1] - self.z[i]);
        self.intensity[i] * (1.0 - t) + self.intensity[i + 1] * t
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Field of a free focused beam at `(rho, z)` with `z` measured from focus.
pub fn focused_field(beam: &BeamSpec, rho: f64, z: f64) -> Result<Complex64> {
    Ok(FocusedBeam::new(beam)?.field(rho, z))
}

/// Total field of a trap configuration at `(rho, z)` above the stack.
pub fn field_above_stack(config: &TrapConfiguration, rho: f64, z: f64) -> Result<Complex64> {
    if !(z > 0.0) {
        return Err(Error::InvalidInput(format!("point z = {z} m is not above the surface")));
    }
    Ok(TrapField::new(config)?.field(rho, z))
}

/// Deterministic on-axis intensity over `[z_start, z_end]`.
pub fn axial_line_cut(field: &TrapField, z_start: f64, z_end: f64, n_samples: usize) -> Result<LineCut> {
    if n_samples < 2 || !(z_end > z_start) {
        return Err(Error::InvalidInput(
            "line cut needs z_end > z_start and >= 2 samples".into(),
        ));
    }
    let z = linspace(z_start, z_end, n_samples);
    let intensity = field
        .sample_grid(&[0.0], &z)
        .into_iter()
        .map(|s| s.intensity())
        .collect();
    Ok(LineCut { z, intensity })
}

/// Positions of local maxima of a sampled profile, refined by a parabola
/// through the three neighbouring samples.
pub fn local_extrema(z: &[f64], values: &[f64], maxima: bool) -> Vec<f64> {
    let sign = if maxima { 1.0 } else { -1.0 };
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let (a, b, c) = (sign * values[i - 1], sign * values[i], sign * values[i + 1]);
        if b > a && b >= c {
            let den = a - 2.0 * b + c;
            let h = z[i + 1] - z[i];
            let offset = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            out.push(z[i] + offset * h);
        }
    }
    out
}
