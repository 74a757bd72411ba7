//! Reference configurations used throughout the examples and tests.

use std::sync::OnceLock;

use crate::beam::{BeamSpec, TrapConfiguration};
use crate::constants::{PhysicalConstants, SurfaceMaterial};
use crate::optics::{stack_response, LayerStack, Polarization};
use crate::potential::calibrate_polarizability;
use crate::Result;

/// Tweezer power at which the polarizability is calibrated.
pub const REFERENCE_POWER: f64 = 5e-3;
/// Deepest-site depth of the reference configuration, in millikelvin.
pub const REFERENCE_DEPTH_MK: f64 = 3.0;
/// Effective reflectance of the waveguide regions.
pub const WAVEGUIDE_REFLECTANCE: f64 = 0.03;
/// Bottom-beam power reaching the atoms in the conveyor configurations.
pub const CONVEYOR_BOTTOM_POWER: f64 = 84e-3;

/// The top surface of the membrane is silica.
pub fn membrane_surface() -> SurfaceMaterial {
    SurfaceMaterial::SILICA
}

pub fn waveguide_surface() -> SurfaceMaterial {
    SurfaceMaterial::SILICON_NITRIDE
}

pub fn stationary_membrane(power: f64) -> TrapConfiguration {
    TrapConfiguration::stationary(BeamSpec::tweezer(power), LayerStack::membrane())
}

/// Membrane stack with the reflected amplitude scaled down to the waveguide reflectance.
pub fn waveguide_surrogate(power: f64) -> Result<TrapConfiguration> {
    let mut config = stationary_membrane(power);
    let r = stack_response(&config.stack, config.top_beam.wavelength, 0.0, Polarization::S)?;
    config.reflection_scale = (WAVEGUIDE_REFLECTANCE / r.reflectance).sqrt();
    Ok(config)
}

/// Membrane lattice with the bottom beam on. `relative_phase` 0 is in phase,
/// 0.5 out of phase.
pub fn conveyor_membrane(top_power: f64, relative_phase: f64) -> Result<TrapConfiguration> {
    let mut config = stationary_membrane(top_power);
    let through = stack_response(
        &config.stack.reversed(),
        config.top_beam.wavelength,
        0.0,
        Polarization::S,
    )?;
    config.bottom_beam = Some(BeamSpec::bottom(CONVEYOR_BOTTOM_POWER / through.transmittance));
    config.relative_phase = relative_phase;
    Ok(config)
}

/// Constants with the polarizability calibrated so that the 5 mW membrane
/// lattice has a 3 mK deepest site.
pub fn calibrated_constants() -> Result<PhysicalConstants> {
    static CACHE: OnceLock<PhysicalConstants> = OnceLock::new();
    if let Some(c) = CACHE.get() {
        return Ok(*c);
    }
    let base = PhysicalConstants::default();
    let target = REFERENCE_DEPTH_MK * 1e-3 * base.boltzmann;
    let alpha = calibrate_polarizability(
        &stationary_membrane(REFERENCE_POWER),
        &base,
        &membrane_surface(),
        target,
    )?;
    Ok(*CACHE.get_or_init(|| base.with_polarizability(alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::TrapField;
    use crate::potential::deepest_site_depth;

    #[test]
    fn calibration_hits_reference_depth() {
        let c = calibrated_constants().unwrap();
        let depth = deepest_site_depth(&stationary_membrane(REFERENCE_POWER), &c, &membrane_surface()).unwrap();
        assert!((c.joules_to_millikelvin(depth) - 3.0).abs() < 1e-6);
        // About 2500 atomic units.
        let au = 1.648_777_274_36e-41;
        assert!((1000.0..5000.0).contains(&(c.polarizability / au)));
    }

    #[test]
    fn waveguide_reflectance_is_reduced() {
        let f = TrapField::new(&waveguide_surrogate(5e-3).unwrap()).unwrap();
        assert!((f.reflectance_normal() - WAVEGUIDE_REFLECTANCE).abs() < 1e-12);
    }

    #[test]
    fn conveyor_delivers_reference_bottom_power() {
        let config = conveyor_membrane(5e-3, 0.0).unwrap();
        let f = TrapField::new(&config).unwrap();
        let p = config.bottom_beam.unwrap().power * f.bottom_transmittance();
        assert!((p - CONVEYOR_BOTTOM_POWER).abs() < 1e-12);
    }
}
