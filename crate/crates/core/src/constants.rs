//! Physical constants for cesium in a 935 nm tweezer and surface-interaction
//! coefficients.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const CESIUM_MASS: f64 = 132.905_451_961 * ATOMIC_MASS_UNIT;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Cs D2 cooling/imaging wavelength.
pub const LAMBDA_ATOM: f64 = 852e-9;
/// Magic tweezer wavelength for the Cs cooling transition.
pub const LAMBDA_TRAP: f64 = 935e-9;

/// Placeholder polarizability used before calibration, in C·m²/V.
///
/// [`crate::presets::calibrated_constants`] replaces it with the value that gives
/// the reference trap depth.
pub const DEFAULT_POLARIZABILITY: f64 = 4.0e-38;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub planck: f64,
    pub boltzmann: f64,
    pub mass: f64,
    pub lambda_atom: f64,
    pub lambda_trap: f64,
    /// Dynamic polarizability at the trap wavelength, C·m²/V.
    pub polarizability: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            planck: PLANCK,
            boltzmann: BOLTZMANN,
            mass: CESIUM_MASS,
            lambda_atom: LAMBDA_ATOM,
            lambda_trap: LAMBDA_TRAP,
            polarizability: DEFAULT_POLARIZABILITY,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.planck,
            self.boltzmann,
            self.mass,
            self.lambda_atom,
            self.lambda_trap,
            self.polarizability,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "physical constants must be finite and positive".into(),
            ))
        }
    }

    /// Photon recoil energy `h² / (2 λ_a² m)` in joules.
    pub fn recoil_energy(&self) -> f64 {
        self.planck * self.planck / (2.0 * self.lambda_atom * self.lambda_atom * self.mass)
    }

    /// Velocity change from one photon recoil at the atomic wavelength.
    pub fn recoil_velocity(&self) -> f64 {
        self.planck / (self.lambda_atom * self.mass)
    }

    /// Light-shift coefficient: `U = -coefficient * I`.
    pub fn light_shift_per_intensity(&self) -> f64 {
        self.polarizability / (2.0 * VACUUM_PERMITTIVITY * SPEED_OF_LIGHT)
    }

    pub fn joules_to_millikelvin(&self, energy: f64) -> f64 {
        energy / self.boltzmann * 1e3
    }

    pub fn with_polarizability(mut self, polarizability: f64) -> Self {
        self.polarizability = polarizability;
        self
    }
}

/// Casimir-Polder coefficients of a dielectric surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMaterial {
    /// `C4 / h` in Hz·m⁴.
    pub c4_over_h: f64,
    /// Retardation length scale in meters.
    pub lambda_bar: f64,
}

impl SurfaceMaterial {
    /// Fused silica: `C4/h = 158 Hz·μm⁴`.
    pub const SILICA: Self = Self {
        c4_over_h: 158.0e-24,
        lambda_bar: 136e-9,
    };
    /// Silicon nitride: `C4/h = 267 Hz·μm⁴`.
    pub const SILICON_NITRIDE: Self = Self {
        c4_over_h: 267.0e-24,
        lambda_bar: 136e-9,
    };

    pub fn validate(&self) -> Result<()> {
        if self.c4_over_h > 0.0 && self.lambda_bar > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "surface material requires C4 > 0 and lambda_bar > 0".into(),
            ))
        }
    }
}
