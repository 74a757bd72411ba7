//! Plane-wave response of planar dielectric multilayers.
//!
//! Sign convention: fields are `E = E0 exp(i(kx x + kz z − ωt))` with `z` pointing
//! from the incidence medium into the stack. Single-interface coefficients are
//!
//! ```text
//! S:  r = (kz1 − kz2) / (kz1 + kz2)             t = 2 kz1 / (kz1 + kz2)
//! P:  r = (n1² kz2 − n2² kz1) / (n1² kz2 + n2² kz1)   t = 2 n1 n2 kz1 / (n1² kz2 + n2² kz1)
//! ```
//!
//! so both polarizations agree at normal incidence and a denser second medium
//! gives a negative `r`. The reflection phase returned by [`stack_response`] is
//! referenced to the first interface of the stack.
//!
//! Longitudinal wavevectors are complex, with the branch `Im kz ≥ 0` chosen, so
//! absorbing films and total internal reflection need no special casing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub mod materials {
    /// Default refractive index of LPCVD/thermal silica near 900 nm.
    pub const SILICA: f64 = 1.45;
    /// Default refractive index of stoichiometric LPCVD silicon nitride near 900 nm.
    pub const SILICON_NITRIDE: f64 = 2.00;
    pub const VACUUM: f64 = 1.0;

    pub const MEMBRANE_SILICA_THICKNESS: f64 = 2.0e-6;
    pub const MEMBRANE_NITRIDE_THICKNESS: f64 = 550e-9;
    pub const TOP_NITRIDE_THICKNESS: f64 = 360e-9;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    S,
    P,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::S, Polarization::P];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub index: Complex64,
    /// `None` marks the semi-infinite media bounding the stack.
    pub thickness: Option<f64>,
}

impl Layer {
    pub fn semi_infinite(index: f64) -> Self {
        Self {
            index: Complex64::new(index, 0.0),
            thickness: None,
        }
    }

    pub fn film(index: impl Into<Complex64>, thickness: f64) -> Self {
        Self {
            index: index.into(),
            thickness: Some(thickness),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    layers: Vec<Layer>,
}

impl LayerStack {
    /// Builds a stack ordered from the incidence side.
    ///
    /// Interior films may have zero thickness; they are then optically absent.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidStack("need at least two media".into()));
        }
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            let n = layer.index;
            if !(n.re.is_finite() && n.im.is_finite()) || n.re <= 0.0 {
                return Err(Error::InvalidStack(format!("layer {i}: bad index {n}")));
            }
            if n.im < 0.0 {
                return Err(Error::InvalidStack(format!(
                    "layer {i}: negative imaginary index (gain) is not supported"
                )));
            }
            let boundary = i == 0 || i == last;
            match (boundary, layer.thickness) {
                (true, None) => {
                    if n.im != 0.0 {
                        return Err(Error::InvalidStack(format!("boundary medium {i} must be lossless")));
                    }
                }
                (true, Some(_)) => {
                    return Err(Error::InvalidStack(format!(
                        "boundary medium {i} must be semi-infinite"
                    )))
                }
                (false, None) => return Err(Error::InvalidStack(format!("interior layer {i} needs a thickness"))),
                (false, Some(d)) => {
                    if !(d.is_finite() && d >= 0.0) {
                        return Err(Error::InvalidStack(format!(
                            "interior layer {i}: thickness {d} must be finite and non-negative"
                        )));
                    }
                }
            }
        }
        Ok(Self { layers })
    }

    /// Vacuum | films | vacuum.
    pub fn in_vacuum(films: &[(f64, f64)]) -> Result<Self> {
        let mut layers = vec![Layer::semi_infinite(materials::VACUUM)];
        layers.extend(films.iter().map(|&(n, d)| Layer::film(n, d)));
        layers.push(Layer::semi_infinite(materials::VACUUM));
        Self::new(layers)
    }

    /// Suspended membrane seen from the atom side: 2 μm silica over 550 nm nitride.
    pub fn membrane() -> Self {
        Self::membrane_with(materials::SILICA, materials::SILICON_NITRIDE, false)
    }

    /// Membrane with explicit indices, optionally capped by the 360 nm nitride layer.
    pub fn membrane_with(n_silica: f64, n_nitride: f64, top_nitride: bool) -> Self {
        let mut films = Vec::new();
        if top_nitride {
            films.push((n_nitride, materials::TOP_NITRIDE_THICKNESS));
        }
        films.push((n_silica, materials::MEMBRANE_SILICA_THICKNESS));
        films.push((n_nitride, materials::MEMBRANE_NITRIDE_THICKNESS));
        Self::in_vacuum(&films).expect("membrane preset is valid")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn incidence_index(&self) -> f64 {
        self.layers[0].index.re
    }

    pub fn exit_index(&self) -> f64 {
        self.layers[self.layers.len() - 1].index.re
    }

    pub fn reversed(&self) -> Self {
        let mut layers = self.layers.clone();
        layers.reverse();
        Self { layers }
    }

    pub fn is_lossless(&self) -> bool {
        self.layers.iter().all(|l| l.index.im == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveResponse {
    pub r: Complex64,
    pub t: Complex64,
    pub reflectance: f64,
    pub transmittance: f64,
    pub polarization: Polarization,
    pub angle: f64,
    pub wavelength: f64,
    /// The wave in the exit medium is evanescent; `transmittance` is then 0.
    pub total_internal_reflection: bool,
}

fn longitudinal(n: Complex64, n_sin: f64) -> Complex64 {
    let kz = (n * n - n_sin * n_sin).sqrt();
    if kz.im < 0.0 || (kz.im == 0.0 && kz.re < 0.0) {
        -kz
    } else {
        kz
    }
}

fn interface(
    n1: Complex64,
    n2: Complex64,
    kz1: Complex64,
    kz2: Complex64,
    pol: Polarization,
) -> (Complex64, Complex64) {
    match pol {
        Polarization::S => {
            let den = kz1 + kz2;
            ((kz1 - kz2) / den, 2.0 * kz1 / den)
        }
        Polarization::P => {
            let a = n1 * n1 * kz2;
            let b = n2 * n2 * kz1;
            let den = a + b;
            ((a - b) / den, 2.0 * n1 * n2 * kz1 / den)
        }
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if !theta.is_finite() || !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidInput(format!(
            "incidence angle {theta} rad outside [0, pi/2)"
        )));
    }
    Ok(())
}

/// Amplitude coefficients of a single interface for a wave incident from `n1`
/// at angle `theta`.
pub fn fresnel_interface(
    n1: Complex64,
    n2: Complex64,
    theta: f64,
    pol: Polarization,
) -> Result<(Complex64, Complex64)> {
    check_angle(theta)?;
    for v in [n1.re, n1.im, n2.re, n2.im] {
        if !v.is_finite() {
            return Err(Error::NonFinite("fresnel_interface index"));
        }
    }
    if n1.im != 0.0 {
        return Err(Error::InvalidInput("incidence medium must be lossless".into()));
    }
    let n_sin = n1.re * theta.sin();
    let kz1 = longitudinal(n1, n_sin);
    let kz2 = longitudinal(n2, n_sin);
    Ok(interface(n1, n2, kz1, kz2, pol))
}

type Matrix2 = [[Complex64; 2]; 2];

fn matmul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Reflection and transmission of the whole stack by the transfer-matrix method.
pub fn stack_response(stack: &LayerStack, wavelength: f64, theta: f64, pol: Polarization) -> Result<PlaneWaveResponse> {
    check_angle(theta)?;
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(Error::InvalidInput(format!("wavelength {wavelength} must be positive")));
    }
    let layers = stack.layers();
    let k0 = 2.0 * std::f64::consts::PI / wavelength;
    let n_sin = stack.incidence_index() * theta.sin();
    let kz: Vec<Complex64> = layers.iter().map(|l| longitudinal(l.index, n_sin)).collect();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut m: Matrix2 = [[one, zero], [zero, one]];
    let last = layers.len() - 1;
    for j in 0..last {
        let (r, t) = interface(layers[j].index, layers[j + 1].index, kz[j], kz[j + 1], pol);
        let d = [[one / t, r / t], [r / t, one / t]];
        m = matmul(&m, &d);
        if j + 1 < last {
            let thickness = layers[j + 1].thickness.unwrap_or(0.0);
            let delta = k0 * kz[j + 1] * thickness;
            let i = Complex64::i();
            let p = [[(-i * delta).exp(), zero], [zero, (i * delta).exp()]];
            m = matmul(&m, &p);
        }
    }
    let r = m[1][0] / m[0][0];
    let t = one / m[0][0];
    if !(r.re.is_finite() && r.im.is_finite() && t.re.is_finite() && t.im.is_finite()) {
        return Err(Error::NonFinite("stack_response"));
    }
    let kz_in = kz[0].re;
    let kz_out = kz[last];
    let evanescent = kz_out.re <= 1e-12 * kz_out.norm().max(1e-300);
    let transmittance = if evanescent {
        0.0
    } else {
        // Both `t` are electric-field ratios, so the power factor is the same.
        kz_out.re / kz_in * t.norm_sqr()
    };
    Ok(PlaneWaveResponse {
        r,
        t,
        reflectance: r.norm_sqr(),
        transmittance,
        polarization: pol,
        angle: theta,
        wavelength,
        total_internal_reflection: evanescent,
    })
}

/// Evaluates [`stack_response`] over a monotone angle grid.
pub fn reflectance_spectrum(
    stack: &LayerStack,
    wavelength: f64,
    thetas: &[f64],
    pol: Polarization,
) -> Result<Vec<PlaneWaveResponse>> {
    let increasing = thetas.windows(2).all(|w| w[1] > w[0]);
    let decreasing = thetas.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::InvalidInput("angle grid must be strictly monotone".into()));
    }
    thetas
        .iter()
        .map(|&th| stack_response(stack, wavelength, th, pol))
        .collect()
}

/// Angle in the exit medium that corresponds to `theta` in the incidence medium,
/// or `None` beyond the critical angle.
pub fn exit_angle(stack: &LayerStack, theta: f64) -> Option<f64> {
    let s = stack.incidence_index() * theta.sin() / stack.exit_index();
    (s < 1.0).then(|| s.asin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn identical_media_have_no_interface() {
        for pol in Polarization::BOTH {
            for th in [0.0, 0.3, 1.2] {
                let (r, t) = fresnel_interface(c(1.0), c(1.0), th, pol).unwrap();
                assert!(r.norm() < 1e-15);
                assert!((t - 1.0).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn normal_incidence_on_glass() {
        let (r, _) = fresnel_interface(c(1.0), c(1.45), 0.0, Polarization::S).unwrap();
        assert_relative_eq!(r.re, -0.45 / 2.45, max_relative = 1e-12);
        assert_relative_eq!(r.norm_sqr(), 0.033_735_943_356_934_6, max_relative = 1e-9);
        let (rp, _) = fresnel_interface(c(1.0), c(1.45), 0.0, Polarization::P).unwrap();
        assert!((rp - r).norm() < 1e-15);
    }

    #[test]
    fn brewster_null() {
        let th = 1.45f64.atan();
        let (r, _) = fresnel_interface(c(1.0), c(1.45), th, Polarization::P).unwrap();
        assert!(r.norm() < 1e-12, "|r_p| = {}", r.norm());
    }

    #[test]
    fn rejects_non_finite_and_bad_angles() {
        assert!(fresnel_interface(c(f64::NAN), c(1.0), 0.0, Polarization::S).is_err());
        assert!(fresnel_interface(c(1.0), c(1.5), PI / 2.0, Polarization::S).is_err());
        assert!(fresnel_interface(c(1.0), c(1.5), -0.1, Polarization::S).is_err());
    }

    #[test]
    fn stack_validation() {
        assert!(LayerStack::new(vec![Layer::semi_infinite(1.0)]).is_err());
        assert!(LayerStack::new(vec![
            Layer::semi_infinite(1.0),
            Layer::film(1.5, -1e-9),
            Layer::semi_infinite(1.0)
        ])
        .is_err());
        assert!(LayerStack::new(vec![Layer::film(1.0, 1e-6), Layer::semi_infinite(1.0)]).is_err());
    }

    #[test]
    fn quarter_wave_film_matches_airy_formula() {
        let lambda = 935e-9;
        let (n0, n1, n2) = (1.0, 2.0, 1.45);
        let stack = LayerStack::new(vec![
            Layer::semi_infinite(n0),
            Layer::film(n1, lambda / (4.0 * n1)),
            Layer::semi_infinite(n2),
        ])
        .unwrap();
        let resp = stack_response(&stack, lambda, 0.0, Polarization::S).unwrap();
        // Quarter-wave: R = ((n0 n2 - n1²) / (n0 n2 + n1²))².
        let expected = ((n0 * n2 - n1 * n1) / (n0 * n2 + n1 * n1)).powi(2);
        assert!((resp.reflectance - expected).abs() < 1e-10);
    }

    #[test]
    fn general_airy_single_film() {
        let lambda = 852e-9;
        let (n0, n1, n2, d, th) = (1.0, 1.8, 1.3, 333e-9, 0.4f64);
        let stack = LayerStack::new(vec![
            Layer::semi_infinite(n0),
            Layer::film(n1, d),
            Layer::semi_infinite(n2),
        ])
        .unwrap();
        for pol in Polarization::BOTH {
            let (r01, _) = fresnel_interface(c(n0), c(n1), th, pol).unwrap();
            let th1 = (n0 * th.sin() / n1).asin();
            let (r12, _) = fresnel_interface(c(n1), c(n2), th1, pol).unwrap();
            let beta = 2.0 * PI / lambda * n1 * d * th1.cos();
            let ph = Complex64::new(0.0, 2.0 * beta).exp();
            let r = (r01 + r12 * ph) / (1.0 + r01 * r12 * ph);
            let resp = stack_response(&stack, lambda, th, pol).unwrap();
            assert!((resp.r - r).norm() < 1e-12);
        }
    }

    #[test]
    fn membrane_reflectances() {
        let stack = LayerStack::membrane();
        let r0 = stack_response(&stack, 935e-9, 0.0, Polarization::S).unwrap();
        assert!((0.2..=0.4).contains(&r0.reflectance), "{}", r0.reflectance);
        let s75 = stack_response(&stack, 852e-9, 75f64.to_radians(), Polarization::S).unwrap();
        let p75 = stack_response(&stack, 852e-9, 75f64.to_radians(), Polarization::P).unwrap();
        assert!((0.78..=0.98).contains(&s75.reflectance));
        assert!((0.14..=0.34).contains(&p75.reflectance));
    }

    #[test]
    fn total_internal_reflection_flagged() {
        let stack = LayerStack::new(vec![
            Layer::semi_infinite(1.5),
            Layer::film(1.2, 200e-9),
            Layer::semi_infinite(1.0),
        ])
        .unwrap();
        let resp = stack_response(&stack, 852e-9, 1.0, Polarization::S).unwrap();
        assert!(resp.total_internal_reflection);
        assert_eq!(resp.transmittance, 0.0);
        assert!((resp.reflectance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absorbing_film_loses_energy() {
        let stack = LayerStack::new(vec![
            Layer::semi_infinite(1.0),
            Layer::film(Complex64::new(2.0, 0.3), 300e-9),
            Layer::semi_infinite(1.0),
        ])
        .unwrap();
        let resp = stack_response(&stack, 852e-9, 0.2, Polarization::P).unwrap();
        assert!(resp.reflectance + resp.transmittance < 1.0);
    }

    #[test]
    fn singleton_spectrum() {
        let stack = LayerStack::membrane();
        let one = reflectance_spectrum(&stack, 935e-9, &[0.3], Polarization::P).unwrap();
        let direct = stack_response(&stack, 935e-9, 0.3, Polarization::P).unwrap();
        assert_eq!(one, vec![direct]);
        assert!(reflectance_spectrum(&stack, 935e-9, &[0.3, 0.2, 0.4], Polarization::P).is_err());
    }

    #[test]
    fn membrane_spectrum_is_continuous() {
        let stack = LayerStack::membrane();
        let thetas: Vec<f64> = (0..1000).map(|i| i as f64 * 1.5 / 999.0).collect();
        for pol in Polarization::BOTH {
            let spec = reflectance_spectrum(&stack, 935e-9, &thetas, pol).unwrap();
            let jump = spec
                .windows(2)
                .map(|w| (w[1].reflectance - w[0].reflectance).abs())
                .fold(0.0, f64::max);
            assert!(jump < 0.01, "max jump {jump}");
        }
    }

    fn random_stack() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..=6).prop_flat_map(|n| {
            (
                prop::collection::vec(1.0f64..3.0, n),
                prop::collection::vec(50e-9f64..3e-6, n.saturating_sub(2)),
            )
        })
    }

    fn build(indices: &[f64], thicknesses: &[f64]) -> LayerStack {
        let last = indices.len() - 1;
        let layers = indices
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                if i == 0 || i == last {
                    Layer::semi_infinite(n)
                } else {
                    Layer::film(n, thicknesses[i - 1])
                }
            })
            .collect();
        LayerStack::new(layers).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn lossless_energy_conservation((idx, th) in random_stack(), frac in 0.0f64..0.999, lambda in 400e-9f64..1.6e-6) {
            let stack = build(&idx, &th);
            let critical = (stack.exit_index() / stack.incidence_index()).min(1.0).asin();
            let theta = frac * critical.min(1.5);
            for pol in Polarization::BOTH {
                let resp = stack_response(&stack, lambda, theta, pol).unwrap();
                prop_assert!(!resp.total_internal_reflection);
                prop_assert!((resp.reflectance + resp.transmittance - 1.0).abs() < 1e-10);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&resp.reflectance));
            }
        }

        #[test]
        fn polarizations_coincide_at_normal_incidence((idx, th) in random_stack()) {
            let stack = build(&idx, &th);
            let s = stack_response(&stack, 935e-9, 0.0, Polarization::S).unwrap();
            let p = stack_response(&stack, 935e-9, 0.0, Polarization::P).unwrap();
            prop_assert!((s.r.norm() - p.r.norm()).abs() < 1e-12);
            prop_assert!((s.t.norm() - p.t.norm()).abs() < 1e-12);
        }

        #[test]
        fn reversal_symmetry((idx, th) in random_stack(), frac in 0.0f64..0.99) {
            let stack = build(&idx, &th);
            let critical = (stack.exit_index() / stack.incidence_index()).min(1.0).asin();
            let theta = frac * critical.min(1.5);
            let back_angle = exit_angle(&stack, theta).unwrap();
            let rev = stack.reversed();
            for pol in Polarization::BOTH {
                let fwd = stack_response(&stack, 852e-9, theta, pol).unwrap();
                let bwd = stack_response(&rev, 852e-9, back_angle, pol).unwrap();
                prop_assert!((fwd.reflectance - bwd.reflectance).abs() < 1e-10);
            }
        }

        #[test]
        fn zero_thickness_layer_is_invisible((idx, th) in random_stack(), n_extra in 1.0f64..3.0, pos in 0usize..6, theta in 0.0f64..0.3) {
            let stack = build(&idx, &th);
            let mut layers = stack.layers().to_vec();
            let at = 1 + pos % (layers.len() - 1);
            layers.insert(at, Layer::film(n_extra, 0.0));
            let padded = LayerStack::new(layers).unwrap();
            for pol in Polarization::BOTH {
                let a = stack_response(&stack, 935e-9, theta, pol).unwrap();
                let b = stack_response(&padded, 935e-9, theta, pol).unwrap();
                prop_assert!((a.r - b.r).norm() < 1e-12);
                prop_assert!((a.t - b.t).norm() < 1e-12);
            }
        }
    }
}
