//! Lattice-site search and trap characterization.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::{Error, Result};

/// Anything that can evaluate the full potential at `(ρ, z)`.
pub trait PotentialSampler {
    fn energy(&self, rho: f64, z: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64> PotentialSampler for F {
    fn energy(&self, rho: f64, z: f64) -> f64 {
        self(rho, z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapSite {
    /// 1 for the site closest to the surface.
    pub index: usize,
    pub z: f64,
    /// Energy of the minimum, joules.
    pub energy: f64,
    /// Lowest axial barrier above the minimum, joules.
    pub depth: f64,
    pub f_axial: f64,
    /// `None` when the radial curvature is not positive.
    pub f_radial: Option<f64>,
    pub eta_axial_sq: f64,
    pub eta_radial_sq: Option<f64>,
}

impl TrapSite {
    pub fn depth_millikelvin(&self, constants: &PhysicalConstants) -> f64 {
        constants.joules_to_millikelvin(self.depth)
    }

    pub fn radially_trapped(&self) -> bool {
        self.f_radial.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteSearch {
    /// Minima shallower than this (joules below zero) are ignored.
    pub threshold: f64,
    /// Axial finite-difference step; `None` uses λ_t/400.
    pub axial_step: Option<f64>,
    /// Radial finite-difference step.
    pub radial_step: f64,
}

impl Default for SiteSearch {
    fn default() -> Self {
        Self {
            threshold: crate::constants::BOLTZMANN * 1e-6,
            axial_step: None,
            radial_step: 10e-9,
        }
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 * (a.abs() + b.abs()) + 1e-16 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `η² = E_R / (h f)`.
pub fn lamb_dicke(f: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::InvalidInput(format!("trap frequency must be positive, got {f}")));
    }
    Ok(constants.recoil_energy() / (constants.planck * f))
}

/// Axial trap frequency from the second difference with step `h`.
pub fn axial_frequency(sampler: &impl PotentialSampler, z: f64, h: f64, mass: f64) -> Option<f64> {
    let curvature = (sampler.energy(0.0, z + h) - 2.0 * sampler.energy(0.0, z) + sampler.energy(0.0, z - h)) / (h * h);
    (curvature > 0.0).then(|| (curvature / mass).sqrt() / (2.0 * std::f64::consts::PI))
}

/// Radial trap frequency from the even expansion `U(h) - U(0) ≈ U_ρρ h²/2`.
pub fn radial_frequency(sampler: &impl PotentialSampler, z: f64, h: f64, mass: f64) -> Option<f64> {
    let curvature = 2.0 * (sampler.energy(h, z) - sampler.energy(0.0, z)) / (h * h);
    (curvature > 0.0).then(|| (curvature / mass).sqrt() / (2.0 * std::f64::consts::PI))
}

/// Local minima of an on-axis line cut, refined and characterized with the
/// full potential.
///
/// Depth is the lower of the two neighbouring axial barriers. The barrier
/// beyond the outermost sites is the highest sample between the site and the
/// end of the cut.
pub fn find_sites(
    z: &[f64],
    u: &[f64],
    sampler: &impl PotentialSampler,
    constants: &PhysicalConstants,
    search: &SiteSearch,
) -> Result<Vec<TrapSite>> {
    if z.len() != u.len() || z.len() < 3 {
        return Err(Error::InvalidInput("line cut needs >= 3 matching samples".into()));
    }
    if !z.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput("line cut must be strictly increasing in z".into()));
    }
    let max_step = z.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if max_step > constants.lambda_trap / 40.0 * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!(
            "axial sampling {max_step:.3e} m is coarser than lambda/40"
        )));
    }
    let on_axis = |z: f64| sampler.energy(0.0, z);

    let mut minima = Vec::new();
    for i in 1..u.len() - 1 {
        if u[i] < u[i - 1] && u[i] <= u[i + 1] && u[i] < -search.threshold {
            let (zm, um) = golden_min(on_axis, z[i - 1], z[i + 1]);
            minima.push((i, zm, um));
        }
    }

    let barrier = |lo: usize, hi: usize| -> f64 {
        let (mut best, mut value) = (lo, u[lo]);
        for (j, &v) in u.iter().enumerate().take(hi + 1).skip(lo) {
            if v > value {
                best = j;
                value = v;
            }
        }
        if best == 0 || best == u.len() - 1 {
            return value;
        }
        let (_, neg) = golden_min(|x| -on_axis(x), z[best - 1], z[best + 1]);
        (-neg).max(value)
    };

    let h_axial = search.axial_step.unwrap_or(constants.lambda_trap / 400.0);
    let mut sites = Vec::new();
    for (k, &(i, zm, um)) in minima.iter().enumerate() {
        let left = if k == 0 {
            barrier(0, i)
        } else {
            barrier(minima[k - 1].0, i)
        };
        let right = if k + 1 == minima.len() {
            barrier(i, u.len() - 1)
        } else {
            barrier(i, minima[k + 1].0)
        };
        let depth = left.min(right) - um;
        if !(depth > 0.0) {
            continue;
        }
        let Some(f_axial) = axial_frequency(sampler, zm, h_axial, constants.mass) else {
            continue;
        };
        let f_radial = radial_frequency(sampler, zm, search.radial_step, constants.mass);
        sites.push(TrapSite {
            index: sites.len() + 1,
            z: zm,
            energy: um,
            depth,
            f_axial,
            f_radial,
            eta_axial_sq: lamb_dicke(f_axial, constants)?,
            eta_radial_sq: f_radial.map(|f| lamb_dicke(f, constants)).transpose()?,
        });
    }
    Ok(sites)
}

/// Height of the first site whose radial curvature is not positive, scanning
/// minima outward from the surface.
pub fn radial_sign_flip(sites: &[TrapSite]) -> Option<f64> {
    sites.iter().find(|s| s.f_radial.is_none()).map(|s| s.z)
}
