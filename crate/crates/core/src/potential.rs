//! Light-shift and surface potentials.

use serde::{Deserialize, Serialize};

use crate::beam::{linspace, ComplexField, TrapConfiguration, TrapField};
use crate::constants::{PhysicalConstants, SurfaceMaterial};
use crate::sites::{find_sites, SiteSearch, TrapSite};
use crate::{Error, Result};

/// Potential on a cylindrical grid, joules, row-major with `z` fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialMap {
    pub rho: Vec<f64>,
    pub z: Vec<f64>,
    pub values: Vec<f64>,
}

impl PotentialMap {
    pub fn at(&self, i_rho: usize, i_z: usize) -> f64 {
        self.values[i_rho * self.z.len() + i_z]
    }

    pub fn in_kelvin(&self, constants: &PhysicalConstants) -> Vec<f64> {
        self.values.iter().map(|u| u / constants.boltzmann).collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// `U = -α I / (2 ε0 c)` at every grid point.
pub fn dipole_potential(field: &ComplexField, constants: &PhysicalConstants) -> PotentialMap {
    let c = constants.light_shift_per_intensity();
    PotentialMap {
        rho: field.rho.clone(),
        z: field.z.clone(),
        values: field.values.iter().map(|e| -c * e.norm_sqr()).collect(),
    }
}

pub(crate) fn surface_energy(z: f64, material: &SurfaceMaterial, planck: f64) -> f64 {
    let c4 = material.c4_over_h * planck;
    -c4 / (z * z * z * (z + material.lambda_bar))
}

/// Casimir-Polder attraction `-C4 / (z³ (z + λbar))` in joules.
pub fn casimir_polder(z: f64, material: &SurfaceMaterial) -> Result<f64> {
    material.validate()?;
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Casimir-Polder distance must be positive, got {z}"
        )));
    }
    Ok(surface_energy(z, material, crate::constants::PLANCK))
}

/// Dipole potential of a trap configuration plus the surface attraction.
#[derive(Clone, Debug)]
pub struct TrapPotential {
    field: TrapField,
    constants: PhysicalConstants,
    material: SurfaceMaterial,
}

impl TrapPotential {
    pub fn new(config: &TrapConfiguration, constants: &PhysicalConstants, material: &SurfaceMaterial) -> Result<Self> {
        constants.validate()?;
        material.validate()?;
        Ok(Self {
            field: TrapField::new(config)?,
            constants: *constants,
            material: *material,
        })
    }

    pub fn from_field(field: TrapField, constants: &PhysicalConstants, material: &SurfaceMaterial) -> Self {
        Self {
            field,
            constants: *constants,
            material: *material,
        }
    }

    pub fn field(&self) -> &TrapField {
        &self.field
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn material(&self) -> &SurfaceMaterial {
        &self.material
    }

    pub fn dipole(&self, rho: f64, z: f64) -> f64 {
        -self.constants.light_shift_per_intensity() * self.field.intensity(rho, z)
    }

    pub fn surface(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        surface_energy(z, &self.material, self.constants.planck)
    }

    /// Total potential; `-inf` at or below the surface.
    pub fn energy(&self, rho: f64, z: f64) -> f64 {
        self.dipole(rho, z) + self.surface(z)
    }

    pub fn line_cut(&self, z_start: f64, z_end: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if n < 2 || !(z_end > z_start) || z_start <= 0.0 {
            return Err(Error::InvalidInput(
                "line cut needs 0 < z_start < z_end and >= 2 samples".into(),
            ));
        }
        let z = linspace(z_start, z_end, n);
        let c = self.constants.light_shift_per_intensity();
        let u = self
            .field
            .sample_grid(&[0.0], &z)
            .iter()
            .zip(&z)
            .map(|(s, &z)| -c * s.intensity() + self.surface(z))
            .collect();
        Ok((z, u))
    }

    pub fn map(&self, rho: Vec<f64>, z: Vec<f64>) -> Result<PotentialMap> {
        if z.iter().any(|&z| z <= 0.0) {
            return Err(Error::InvalidInput("potential map must lie above the surface".into()));
        }
        let field = ComplexField::sample(&self.field, rho, z)?;
        let mut map = dipole_potential(&field, &self.constants);
        let nz = map.z.len();
        for (i, u) in map.values.iter_mut().enumerate() {
            *u += self.surface(map.z[i % nz]);
        }
        Ok(map)
    }

    /// Sites along the axis between `z_start` and `z_end`.
    pub fn sites(&self, z_start: f64, z_end: f64, search: &SiteSearch) -> Result<Vec<TrapSite>> {
        let step = self.constants.lambda_trap / 80.0;
        let n = ((z_end - z_start) / step).ceil() as usize + 1;
        let (z, u) = self.line_cut(z_start, z_end, n)?;
        find_sites(&z, &u, &|rho: f64, z: f64| self.energy(rho, z), &self.constants, search)
    }
}

/// Dipole plus surface potential on a grid.
pub fn total_potential(
    config: &TrapConfiguration,
    constants: &PhysicalConstants,
    material: &SurfaceMaterial,
    rho: Vec<f64>,
    z: Vec<f64>,
) -> Result<PotentialMap> {
    TrapPotential::new(config, constants, material)?.map(rho, z)
}

/// Axial window searched for sites during calibration and reporting.
pub const SITE_WINDOW: (f64, f64) = (20e-9, 20e-6);

/// Depth of the deepest site for a given polarizability.
pub fn deepest_site_depth(
    config: &TrapConfiguration,
    constants: &PhysicalConstants,
    material: &SurfaceMaterial,
) -> Result<f64> {
    let potential = TrapPotential::new(config, constants, material)?;
    Ok(potential
        .sites(SITE_WINDOW.0, SITE_WINDOW.1, &SiteSearch::default())?
        .iter()
        .map(|s| s.depth)
        .fold(0.0, f64::max))
}

/// Polarizability for which the deepest site of `config` has depth `target`
/// (joules), by secant iteration.
pub fn calibrate_polarizability(
    config: &TrapConfiguration,
    constants: &PhysicalConstants,
    material: &SurfaceMaterial,
    target: f64,
) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::InvalidInput("target depth must be positive".into()));
    }
    // The dipole part scales with α, so one field evaluation serves all iterates.
    let field = TrapField::new(config)?;
    let depth = |alpha: f64| -> Result<f64> {
        let c = constants.with_polarizability(alpha);
        let p = TrapPotential::from_field(field.clone(), &c, material);
        Ok(p.sites(SITE_WINDOW.0, SITE_WINDOW.1, &SiteSearch::default())?
            .iter()
            .map(|s| s.depth)
            .fold(0.0, f64::max)
            - target)
    };
    let mut a0 = constants.polarizability;
    let mut f0 = depth(a0)?;
    let mut a1 = a0 * target / (f0 + target).max(1e-3 * target);
    let mut f1 = depth(a1)?;
    for _ in 0..50 {
        if f1.abs() < 1e-10 * target {
            return Ok(a1);
        }
        let slope = (f1 - f0) / (a1 - a0);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let a2 = (a1 - f1 / slope).max(0.1 * a1);
        a0 = a1;
        f0 = f1;
        a1 = a2;
        f1 = depth(a1)?;
    }
    if f1.abs() < 1e-6 * target {
        Ok(a1)
    } else {
        Err(Error::NotConverged {
            iterations: 50,
            cost: f1,
            best: vec![a1],
        })
    }
}
