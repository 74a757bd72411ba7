//! Langevin Monte Carlo of atoms loading into a tweezer lattice.
//!
//! Atoms enter a `L × L × H` box above the surface through its top or one of its
//! four sides, move in the total potential with linear damping and random
//! photon recoils, and are classified after a fixed loading time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::linspace;
use crate::constants::{PhysicalConstants, SurfaceMaterial};
use crate::grid::AxisymmetricTable;
use crate::potential::{surface_energy, TrapPotential, SITE_WINDOW};
use crate::sites::{SiteSearch, TrapSite};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoolingModel {
    /// Linear damping coefficient β in kg/s.
    pub damping: f64,
    /// Photon scattering rate in 1/s.
    pub scattering_rate: f64,
}

impl CoolingModel {
    /// `β/m = 2000 /s`, `10⁵` scattering events per second.
    pub fn doppler(constants: &PhysicalConstants) -> Self {
        Self {
            damping: 2e3 * constants.mass,
            scattering_rate: 1e5,
        }
    }

    pub fn none() -> Self {
        Self {
            damping: 0.0,
            scattering_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    /// Side length of the square box footprint, centred on the tweezer axis.
    pub box_width: f64,
    pub box_height: f64,
    pub n_trajectories: usize,
    pub temperature: f64,
    pub duration: f64,
    /// Requested step; halved until it resolves the fastest trap oscillation.
    pub dt: f64,
    pub cooling: CoolingModel,
    pub seed: u64,
    /// Atoms closer than this to the surface stick to it.
    pub adsorption_height: f64,
}

impl MCConfig {
    pub fn desk(constants: &PhysicalConstants, seed: u64) -> Self {
        Self {
            box_width: 10e-6,
            box_height: 20e-6,
            n_trajectories: 10_000,
            temperature: 20e-6,
            duration: 1e-3,
            dt: 0.5e-6,
            cooling: CoolingModel::doppler(constants),
            seed,
            adsorption_height: 10e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("box_width", self.box_width),
            ("box_height", self.box_height),
            ("temperature", self.temperature),
            ("duration", self.duration),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.n_trajectories == 0 {
            return Err(Error::InvalidInput("n_trajectories must be positive".into()));
        }
        if !(self.cooling.damping >= 0.0 && self.cooling.scattering_rate >= 0.0) {
            return Err(Error::InvalidInput("cooling parameters must be non-negative".into()));
        }
        if !(self.adsorption_height >= 0.0 && self.adsorption_height < self.box_height) {
            return Err(Error::InvalidInput("adsorption height must lie inside the box".into()));
        }
        Ok(())
    }

    pub fn thermal_sigma(&self, constants: &PhysicalConstants) -> f64 {
        (constants.boltzmann * self.temperature / constants.mass).sqrt()
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        let h = 0.5 * self.box_width;
        p[0].abs() <= h && p[1].abs() <= h && p[2] <= self.box_height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

impl AtomState {
    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.velocity).all(|v| v.is_finite())
    }

    pub fn speed(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn rho(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }
}

/// Potential and force for the integrator.
pub trait ForceField: Sync {
    fn energy(&self, p: &[f64; 3]) -> f64;
    /// `(U, ∇U)`.
    fn energy_gradient(&self, p: &[f64; 3]) -> (f64, [f64; 3]);
}

/// No forces at all.
#[derive(Clone, Copy, Debug, Default)]
pub struct FreeSpace;

impl ForceField for FreeSpace {
    fn energy(&self, _: &[f64; 3]) -> f64 {
        0.0
    }

    fn energy_gradient(&self, _: &[f64; 3]) -> (f64, [f64; 3]) {
        (0.0, [0.0; 3])
    }
}

/// Tabulated dipole potential plus the analytic surface term.
#[derive(Clone, Debug)]
pub struct LoadingPotential {
    table: AxisymmetricTable,
    material: SurfaceMaterial,
    planck: f64,
    sites: Vec<TrapSite>,
}

/// Grid spacing of the potential table.
pub const TABLE_RHO_STEP: f64 = 50e-9;
pub const TABLE_Z_STEP: f64 = 10e-9;

impl LoadingPotential {
    /// Tabulates the dipole potential of `potential` over the loading box.
    pub fn build(potential: &TrapPotential, config: &MCConfig) -> Result<Self> {
        config.validate()?;
        let rho_max = 0.5 * config.box_width * std::f64::consts::SQRT_2 + 2.0 * TABLE_RHO_STEP;
        let n_rho = (rho_max / TABLE_RHO_STEP).ceil() as usize + 1;
        let rho_max = (n_rho - 1) as f64 * TABLE_RHO_STEP;
        let z_max = config.box_height + 2.0 * TABLE_Z_STEP;
        let n_z = (z_max / TABLE_Z_STEP).ceil() as usize + 1;
        let z_max = (n_z - 1) as f64 * TABLE_Z_STEP;
        let rho = linspace(0.0, rho_max, n_rho);
        let z = linspace(0.0, z_max, n_z);
        let coef = -potential.constants().light_shift_per_intensity();
        let nodes = potential
            .field()
            .sample_grid(&rho, &z)
            .iter()
            .map(|s| {
                let d = s.intensity_derivatives();
                [coef * d[0], coef * d[1], coef * d[2], coef * d[3]]
            })
            .collect();
        let table = AxisymmetricTable::new((0.0, rho_max, n_rho), (0.0, z_max, n_z), nodes)?;
        let sites = potential.sites(
            SITE_WINDOW.0,
            config.box_height.min(SITE_WINDOW.1),
            &SiteSearch::default(),
        )?;
        Ok(Self {
            table,
            material: *potential.material(),
            planck: potential.constants().planck,
            sites,
        })
    }

    pub fn sites(&self) -> &[TrapSite] {
        &self.sites
    }

    /// Largest axial frequency among the sites, if any.
    pub fn max_axial_frequency(&self) -> Option<f64> {
        self.sites.iter().map(|s| s.f_axial).reduce(f64::max)
    }

    /// Most negative tabulated value.
    pub fn deepest(&self) -> f64 {
        self.table.node_values().fold(0.0, f64::min)
    }

    fn surface(&self, z: f64) -> (f64, f64) {
        if z <= 0.0 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let u = surface_energy(z, &self.material, self.planck);
        let lb = self.material.lambda_bar;
        // d/dz [-C/(z³(z+λ))] = -U (3/z + 1/(z+λ))
        (u, -u * (3.0 / z + 1.0 / (z + lb)))
    }
}

impl ForceField for LoadingPotential {
    fn energy(&self, p: &[f64; 3]) -> f64 {
        let rho = p[0].hypot(p[1]);
        self.table.eval(rho, p[2]).0 + self.surface(p[2]).0
    }

    fn energy_gradient(&self, p: &[f64; 3]) -> (f64, [f64; 3]) {
        let rho = p[0].hypot(p[1]);
        let (u, ur, uz) = self.table.eval(rho, p[2]);
        let (us, dus) = self.surface(p[2]);
        let (gx, gy) = if rho > 0.0 {
            (ur * p[0] / rho, ur * p[1] / rho)
        } else {
            (0.0, 0.0)
        };
        (u + us, [gx, gy, uz + dus])
    }
}

/// Per-trajectory generator: one ChaCha8 stream per trajectory index.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Entry state on the box surface with an inward flux-weighted velocity.
pub fn sample_entry(rng: &mut impl Rng, config: &MCConfig, constants: &PhysicalConstants) -> AtomState {
    let sigma = config.thermal_sigma(constants);
    let w = config.box_width;
    let h = 0.5 * w;
    let top = w * w;
    let side = w * config.box_height;
    let pick = rng.random::<f64>() * (top + 4.0 * side);
    let normal = sigma * (-2.0 * (1.0 - rng.random::<f64>()).ln()).sqrt();
    let mut tangential = || sigma * rng.sample::<f64, _>(StandardNormal);
    let (t1, t2) = (tangential(), tangential());
    let u1 = rng.random::<f64>();
    let u2 = rng.random::<f64>();
    if pick < top {
        AtomState {
            position: [(u1 - 0.5) * w, (u2 - 0.5) * w, config.box_height],
            velocity: [t1, t2, -normal],
        }
    } else {
        let face = (((pick - top) / side) as usize).min(3);
        let along = (u1 - 0.5) * w;
        let z = config.adsorption_height + u2 * (config.box_height - config.adsorption_height);
        let (position, velocity) = match face {
            0 => ([-h, along, z], [normal, t1, t2]),
            1 => ([h, along, z], [-normal, t1, t2]),
            2 => ([along, -h, z], [t1, normal, t2]),
            _ => ([along, h, z], [t1, -normal, t2]),
        };
        AtomState { position, velocity }
    }
}

/// Poisson draw by inversion for small means, given `exp(-mean)`.
fn poisson_small(rng: &mut impl Rng, mean: f64, exp_neg_mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let mut k = 0u32;
    let mut p = exp_neg_mean;
    let mut cdf = p;
    let u = rng.random::<f64>();
    while u > cdf && k < 10_000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

/// Precomputed per-step constants of the Langevin integrator.
#[derive(Clone, Copy, Debug)]
pub struct Stepper {
    dt: f64,
    inv_mass: f64,
    half_damping: f64,
    half_kicks: f64,
    exp_neg_half_kicks: f64,
    recoil: f64,
}

impl Stepper {
    pub fn new(dt: f64, cooling: &CoolingModel, constants: &PhysicalConstants) -> Self {
        let half_kicks = cooling.scattering_rate * dt / 2.0;
        Self {
            dt,
            inv_mass: 1.0 / constants.mass,
            half_damping: (-cooling.damping * dt / (2.0 * constants.mass)).exp(),
            half_kicks,
            exp_neg_half_kicks: (-half_kicks).exp(),
            recoil: constants.recoil_velocity(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn dissipate(&self, v: &mut [f64; 3], rng: &mut impl Rng) {
        for c in v.iter_mut() {
            *c *= self.half_damping;
        }
        let n = poisson_small(rng, self.half_kicks, self.exp_neg_half_kicks);
        for _ in 0..n {
            let d: [f64; 3] = UnitSphere.sample(rng);
            for (c, di) in v.iter_mut().zip(d) {
                *c += self.recoil * di;
            }
        }
    }

    /// One velocity-Verlet step with damping and recoil applied in two halves.
    /// `gradient` holds `∇U` at the current position and is updated in place.
    pub fn step(
        &self,
        state: &mut AtomState,
        gradient: &mut [f64; 3],
        potential: &impl ForceField,
        rng: &mut impl Rng,
    ) -> f64 {
        self.dissipate(&mut state.velocity, rng);
        let half = 0.5 * self.dt * self.inv_mass;
        for i in 0..3 {
            state.velocity[i] -= half * gradient[i];
            state.position[i] += self.dt * state.velocity[i];
        }
        let (u, g) = potential.energy_gradient(&state.position);
        *gradient = g;
        for i in 0..3 {
            state.velocity[i] -= half * gradient[i];
        }
        self.dissipate(&mut state.velocity, rng);
        u
    }
}

/// Free-standing single step, for callers that do not keep a [`Stepper`].
pub fn step(
    state: &AtomState,
    dt: f64,
    potential: &impl ForceField,
    cooling: &CoolingModel,
    constants: &PhysicalConstants,
    rng: &mut impl Rng,
) -> AtomState {
    let stepper = Stepper::new(dt, cooling, constants);
    let mut next = *state;
    let (_, mut g) = potential.energy_gradient(&state.position);
    stepper.step(&mut next, &mut g, potential, rng);
    next
}

/// Halves `dt` until it is at most `1 / (20 f_max)`.
pub fn stable_dt(requested: f64, f_max: Option<f64>) -> f64 {
    let mut dt = requested;
    if let Some(f) = f_max.filter(|f| *f > 0.0) {
        while dt > 1.0 / (20.0 * f) {
            dt *= 0.5;
        }
    }
    dt
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Bound,
    Escaped,
    Adsorbed,
    Flagged,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Bound => "bound",
            Outcome::Escaped => "escaped",
            Outcome::Adsorbed => "adsorbed",
            Outcome::Flagged => "flagged",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub index: usize,
    pub outcome: Outcome,
    pub final_z: f64,
    /// Site the atom was assigned to, if bound.
    pub site: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteOccupancy {
    pub index: usize,
    pub z: f64,
    pub count: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadingReport {
    pub n_trajectories: usize,
    pub bound: usize,
    pub escaped: usize,
    pub adsorbed: usize,
    pub flagged: usize,
    pub p_tot: f64,
    pub escaped_fraction: f64,
    pub adsorbed_fraction: f64,
    pub flagged_fraction: f64,
    pub site_histogram: Vec<SiteOccupancy>,
    pub seed: u64,
    pub rng: String,
    pub dt: f64,
    #[serde(skip)]
    pub outcomes: Vec<TrajectoryOutcome>,
}

impl LoadingReport {
    /// Share of bound atoms found in site 1.
    pub fn first_site_share(&self) -> f64 {
        if self.bound == 0 {
            return 0.0;
        }
        self.site_histogram
            .iter()
            .find(|s| s.index == 1)
            .map_or(0.0, |s| s.count as f64 / self.bound as f64)
    }
}

/// Energy rise (relative to entry) treated as an integration blow-up, in units
/// of the deepest potential magnitude.
const BLOWUP_FACTOR: f64 = 10.0;

/// Below this height each step is split into [`SURFACE_SUBSTEPS`] sub-steps.
const NEAR_SURFACE: f64 = 150e-9;
const SURFACE_SUBSTEPS: usize = 64;

#[allow(clippy::too_many_arguments)]
fn run_one(
    index: usize,
    config: &MCConfig,
    constants: &PhysicalConstants,
    potential: &impl ForceField,
    stepper: &Stepper,
    fine: &Stepper,
    blowup: f64,
    n_steps: usize,
) -> (Outcome, f64) {
    let mut rng = trajectory_rng(config.seed, index as u64);
    let mut state = sample_entry(&mut rng, config, constants);
    let kinetic = |s: &AtomState| 0.5 * constants.mass * s.velocity.iter().map(|v| v * v).sum::<f64>();
    let (mut u, mut g) = potential.energy_gradient(&state.position);
    let e0 = kinetic(&state) + u;
    for _ in 0..n_steps {
        if state.position[2] < NEAR_SURFACE {
            // The surface attraction stiffens sharply; resolve it with sub-steps.
            for _ in 0..SURFACE_SUBSTEPS {
                u = fine.step(&mut state, &mut g, potential, &mut rng);
                if !(state.position[2] > config.adsorption_height) {
                    break;
                }
            }
        } else {
            u = stepper.step(&mut state, &mut g, potential, &mut rng);
        }
        let z = state.position[2];
        if z.is_finite() && z <= config.adsorption_height {
            return (Outcome::Adsorbed, z);
        }
        if !state.is_finite() {
            return (Outcome::Flagged, z);
        }
        if !config.contains(&state.position) {
            return (Outcome::Escaped, z);
        }
        if kinetic(&state) + u - e0 > blowup {
            return (Outcome::Flagged, z);
        }
    }
    let z = state.position[2];
    if kinetic(&state) + u < 0.0 {
        (Outcome::Bound, z)
    } else {
        (Outcome::Escaped, z)
    }
}

fn nearest_site(sites: &[TrapSite], z: f64) -> Option<usize> {
    sites
        .iter()
        .min_by(|a, b| (a.z - z).abs().total_cmp(&(b.z - z).abs()))
        .map(|s| s.index)
}

/// Runs all trajectories. Results depend only on the seed and configuration,
/// not on how trajectories are scheduled across threads.
pub fn run_loading(
    config: &MCConfig,
    constants: &PhysicalConstants,
    potential: &LoadingPotential,
) -> Result<LoadingReport> {
    config.validate()?;
    let dt = stable_dt(config.dt, potential.max_axial_frequency());
    let stepper = Stepper::new(dt, &config.cooling, constants);
    let fine = Stepper::new(dt / SURFACE_SUBSTEPS as f64, &config.cooling, constants);
    let n_steps = (config.duration / dt).round() as usize;
    let blowup = BLOWUP_FACTOR * potential.deepest().abs().max(constants.boltzmann * 1e-3);
    let sites = potential.sites();
    let outcomes: Vec<TrajectoryOutcome> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|index| {
            let (outcome, final_z) = run_one(index, config, constants, potential, &stepper, &fine, blowup, n_steps);
            let site = (outcome == Outcome::Bound)
                .then(|| nearest_site(sites, final_z))
                .flatten();
            TrajectoryOutcome {
                index,
                outcome,
                final_z,
                site,
            }
        })
        .collect();
    Ok(summarize(config, dt, sites, outcomes))
}

fn summarize(config: &MCConfig, dt: f64, sites: &[TrapSite], outcomes: Vec<TrajectoryOutcome>) -> LoadingReport {
    let n = config.n_trajectories;
    let count = |o: Outcome| outcomes.iter().filter(|t| t.outcome == o).count();
    let (bound, escaped, adsorbed, flagged) = (
        count(Outcome::Bound),
        count(Outcome::Escaped),
        count(Outcome::Adsorbed),
        count(Outcome::Flagged),
    );
    let mut per_site = vec![0usize; sites.len()];
    for t in &outcomes {
        if let Some(i) = t.site {
            per_site[i - 1] += 1;
        }
    }
    let nf = n as f64;
    let p_tot = bound as f64 / nf;
    let adsorbed_fraction = adsorbed as f64 / nf;
    let flagged_fraction = flagged as f64 / nf;
    let escaped_fraction = escaped as f64 / nf;
    LoadingReport {
        n_trajectories: n,
        bound,
        escaped,
        adsorbed,
        flagged,
        p_tot,
        escaped_fraction,
        adsorbed_fraction,
        flagged_fraction,
        site_histogram: sites
            .iter()
            .zip(per_site)
            .map(|(s, c)| SiteOccupancy {
                index: s.index,
                z: s.z,
                count: c,
                probability: c as f64 / nf,
            })
            .collect(),
        seed: config.seed,
        rng: "ChaCha8, seed_from_u64(seed), stream = trajectory index".into(),
        dt,
        outcomes,
    }
}

/// Expected number of atoms crossing area `a` in time `t`: `ρ0 A v̄ t`.
pub fn flux_atom_estimate(density: f64, area: f64, mean_speed: f64, time: f64) -> Result<f64> {
    for v in [density, area, mean_speed, time] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidInput("flux estimate inputs must be non-negative".into()));
        }
    }
    Ok(density * area * mean_speed * time)
}
