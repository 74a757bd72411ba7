//! Conveyor-belt detuning profiles and transport kinematics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Piecewise-linear bottom-beam detuning `Δν(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetuningProfile {
    /// `(t, Δν)` breakpoints in seconds and hertz.
    breakpoints: Vec<(f64, f64)>,
}

impl DetuningProfile {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidInput("detuning profile needs >= 2 breakpoints".into()));
        }
        if breakpoints.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::NonFinite("detuning profile"));
        }
        if !breakpoints.windows(2).all(|w| w[1].0 > w[0].0) {
            return Err(Error::InvalidInput(
                "breakpoint times must be strictly increasing".into(),
            ));
        }
        Ok(Self { breakpoints })
    }

    /// Ramp to `peak` in `ramp`, hold for `hold`, ramp back to zero, starting at `t = 0`.
    pub fn trapezoid(peak: f64, hold: f64, ramp: f64) -> Result<Self> {
        if !(ramp > 0.0) || !(hold >= 0.0) {
            return Err(Error::InvalidInput("trapezoid needs ramp > 0 and hold >= 0".into()));
        }
        let mut pts = vec![(0.0, 0.0), (ramp, peak)];
        if hold > 0.0 {
            pts.push((ramp + hold, peak));
        }
        pts.push((2.0 * ramp + hold, 0.0));
        Self::new(pts)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0].0
    }

    pub fn end(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1].0
    }

    /// Detuning at `t`; zero outside the profile.
    pub fn detuning(&self, t: f64) -> f64 {
        if t < self.start() || t > self.end() {
            return 0.0;
        }
        let i = self
            .breakpoints
            .partition_point(|p| p.0 <= t)
            .clamp(1, self.breakpoints.len() - 1);
        let (t0, v0) = self.breakpoints[i - 1];
        let (t1, v1) = self.breakpoints[i];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Accumulated phase `∫ Δν dt` from the start, in cycles.
    pub fn phase(&self, t: f64) -> f64 {
        let t = t.clamp(self.start(), self.end());
        let mut acc = 0.0;
        for w in self.breakpoints.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if t <= t0 {
                break;
            }
            let te = t.min(t1);
            let ve = v0 + (v1 - v0) * (te - t0) / (t1 - t0);
            acc += 0.5 * (v0 + ve) * (te - t0);
        }
        acc
    }

    /// Multiplies every detuning by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.iter().map(|&(t, v)| (t, v * factor)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportKinematics {
    pub t: Vec<f64>,
    pub detuning: Vec<f64>,
    pub displacement: Vec<f64>,
    pub final_displacement: f64,
}

/// Displacement of a lattice site `Δz(t) = (λ/2) ∫ Δν dt`.
pub fn displacement(profile: &DetuningProfile, wavelength: f64, t: f64) -> f64 {
    0.5 * wavelength * profile.phase(t)
}

/// `Δz(t)` sampled uniformly over the profile, with the exact final value.
pub fn transport_kinematics(
    profile: &DetuningProfile,
    wavelength: f64,
    n_samples: usize,
) -> Result<TransportKinematics> {
    if !(wavelength > 0.0) {
        return Err(Error::InvalidInput("wavelength must be positive".into()));
    }
    let t = crate::beam::linspace(profile.start(), profile.end(), n_samples.max(2));
    let detuning = t.iter().map(|&t| profile.detuning(t)).collect();
    let displacement = t.iter().map(|&t| self::displacement(profile, wavelength, t)).collect();
    Ok(TransportKinematics {
        t,
        detuning,
        displacement,
        final_displacement: self::displacement(profile, wavelength, profile.end()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn canonical_trapezoid_distance() {
        let p = DetuningProfile::trapezoid(1e3, 1e-3, 1e-3).unwrap();
        let k = transport_kinematics(&p, 935e-9, 101).unwrap();
        assert_relative_eq!(k.final_displacement, 935e-9, max_relative = 1e-12);
        assert_eq!(*k.displacement.last().unwrap(), k.final_displacement);
        assert_eq!(p.detuning(0.0), 0.0);
        assert_eq!(p.detuning(p.end()), 0.0);
    }

    #[test]
    fn zero_detuning_means_no_transport() {
        let p = DetuningProfile::trapezoid(0.0, 2e-3, 1e-3).unwrap();
        let k = transport_kinematics(&p, 935e-9, 50).unwrap();
        assert_eq!(k.final_displacement, 0.0);
        assert!(k.displacement.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn ramp_is_quadratic() {
        let p = DetuningProfile::trapezoid(2e3, 0.0, 1e-3).unwrap();
        // Half-way up the ramp: area = ½ · 0.5 ms · 1 kHz.
        assert_relative_eq!(p.phase(0.5e-3), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn rejects_unordered_breakpoints() {
        assert!(DetuningProfile::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(DetuningProfile::new(vec![(0.0, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn sign_flip_is_exact(peak in -1e5f64..1e5, hold in 0.0f64..5e-3, ramp in 1e-5f64..2e-3) {
            let a = DetuningProfile::trapezoid(peak, hold, ramp).unwrap();
            let b = DetuningProfile::trapezoid(-peak, hold, ramp).unwrap();
            let za = displacement(&a, 935e-9, a.end());
            let zb = displacement(&b, 935e-9, b.end());
            prop_assert_eq!(za, -zb);
            let closed = 0.5 * 935e-9 * peak * (hold + ramp);
            prop_assert!((za - closed).abs() <= 1e-12 * closed.abs());
        }
    }
}
