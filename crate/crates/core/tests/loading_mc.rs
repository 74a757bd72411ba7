use tweezerlab::constants::PhysicalConstants;
use tweezerlab::loading::{
    run_loading, stable_dt, AtomState, CoolingModel, ForceField, LoadingPotential, LoadingReport, MCConfig, Stepper,
};
use tweezerlab::potential::TrapPotential;
use tweezerlab::presets::{
    calibrated_constants, membrane_surface, stationary_membrane, waveguide_surface, waveguide_surrogate,
};

fn constants() -> PhysicalConstants {
    calibrated_constants().unwrap()
}

fn stationary(power: f64, config: &MCConfig, c: &PhysicalConstants) -> LoadingPotential {
    let p = TrapPotential::new(&stationary_membrane(power), c, &membrane_surface()).unwrap();
    LoadingPotential::build(&p, config).unwrap()
}

fn waveguide(power: f64, config: &MCConfig, c: &PhysicalConstants) -> LoadingPotential {
    let p = TrapPotential::new(&waveguide_surrogate(power).unwrap(), c, &waveguide_surface()).unwrap();
    LoadingPotential::build(&p, config).unwrap()
}

fn small(c: &PhysicalConstants, n: usize, seed: u64) -> MCConfig {
    let mut cfg = MCConfig::desk(c, seed);
    cfg.n_trajectories = n;
    cfg
}

fn check_partition(r: &LoadingReport) {
    assert_eq!(r.bound + r.escaped + r.adsorbed + r.flagged, r.n_trajectories);
    let total = r.p_tot + r.escaped_fraction + r.adsorbed_fraction + r.flagged_fraction;
    assert!((total - 1.0).abs() < 1e-12, "fractions sum to {total}");
    let hist: f64 = r.site_histogram.iter().map(|s| s.probability).sum();
    assert!((hist - r.p_tot).abs() < 1e-12, "histogram {hist} vs P_tot {}", r.p_tot);
}

#[test]
fn energy_is_conserved_in_the_deepest_site_without_cooling() {
    let c = constants();
    let mut cfg = small(&c, 1, 0);
    cfg.cooling = CoolingModel::none();
    let lp = stationary(5e-3, &cfg, &c);
    let site = lp
        .sites()
        .iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .unwrap()
        .clone();
    let dt = stable_dt(cfg.dt, lp.max_axial_frequency());
    let stepper = Stepper::new(dt, &cfg.cooling, &c);
    // A cold atom: 10 uK of kinetic energy shared between the axial and one radial direction.
    let v = (c.boltzmann * 10e-6 / c.mass).sqrt();
    let mut state = AtomState {
        position: [0.0, 0.0, site.z],
        velocity: [v, 0.0, v],
    };
    let energy = |s: &AtomState| lp.energy(&s.position) + 0.5 * c.mass * s.velocity.iter().map(|x| x * x).sum::<f64>();
    let e0 = energy(&state);
    let (_, mut g) = lp.energy_gradient(&state.position);
    let mut rng = tweezerlab::loading::trajectory_rng(0, 0);
    let n = (1e-3 / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        stepper.step(&mut state, &mut g, &lp, &mut rng);
        worst = worst.max((energy(&state) - e0).abs());
    }
    let rel = worst / site.depth;
    assert!(rel < 1e-4, "|dE|/depth = {rel:e} with dt = {dt:e}");
}

#[test]
fn zero_power_binds_nothing() {
    let c = constants();
    let cfg = small(&c, 300, 5);
    let lp = stationary(0.0, &cfg, &c);
    assert!(lp.sites().is_empty());
    let r = run_loading(&cfg, &c, &lp).unwrap();
    assert_eq!(r.bound, 0);
    assert_eq!(r.p_tot, 0.0);
    assert_eq!(r.flagged, 0);
    check_partition(&r);
}

#[test]
fn identical_across_thread_counts() {
    let c = constants();
    let cfg = small(&c, 200, 99);
    let lp = waveguide(5e-3, &cfg, &c);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let r = pool.install(|| run_loading(&cfg, &c, &lp).unwrap());
        format!("{r:?}")
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(7));
}

#[test]
fn seed_changes_outcomes() {
    let c = constants();
    let lp = waveguide(5e-3, &small(&c, 1, 0), &c);
    let a = run_loading(&small(&c, 200, 1), &c, &lp).unwrap();
    let b = run_loading(&small(&c, 200, 2), &c, &lp).unwrap();
    assert_ne!(format!("{:?}", a.outcomes), format!("{:?}", b.outcomes));
}

#[test]
fn partition_and_site_assignment() {
    let c = constants();
    let cfg = small(&c, 500, 11);
    let lp = waveguide(5e-3, &cfg, &c);
    let r = run_loading(&cfg, &c, &lp).unwrap();
    check_partition(&r);
    assert!(r.bound > 0);
    for t in &r.outcomes {
        assert_eq!(t.site.is_some(), t.outcome == tweezerlab::loading::Outcome::Bound);
    }
    assert!(r.first_site_share() < 0.1);
}

#[test]
fn deeper_trap_does_not_load_less() {
    let c = constants();
    let cfg = small(&c, 1000, 3);
    let lo = run_loading(&cfg, &c, &waveguide(2.5e-3, &cfg, &c)).unwrap();
    let hi = run_loading(&cfg, &c, &waveguide(5e-3, &cfg, &c)).unwrap();
    let n = cfg.n_trajectories as f64;
    let sigma = ((lo.p_tot * (1.0 - lo.p_tot) + hi.p_tot * (1.0 - hi.p_tot)) / n).sqrt();
    assert!(
        hi.p_tot >= lo.p_tot - 2.0 * sigma,
        "P(5 mW) = {} vs P(2.5 mW) = {}",
        hi.p_tot,
        lo.p_tot
    );
}
