use proptest::prelude::*;
use tweezerlab::fit::{fit_composite_gaussian, fit_poisson, CompositeGaussianParams};
use tweezerlab::imaging::{synth_histogram, OccupancyLaw};

fn waveguide() -> CompositeGaussianParams {
    CompositeGaussianParams::new(vec![1.0; 4], 370.0, 134.0, 1037.0, 11.0).unwrap()
}

fn membrane() -> CompositeGaussianParams {
    CompositeGaussianParams::new(vec![1.0; 4], 221.0, 138.0, 853.0, 8.4).unwrap()
}

fn three_point_law(mean: f64, variance: f64) -> OccupancyLaw {
    let p2 = (variance + mean * mean - mean) / 2.0;
    let p1 = mean - 2.0 * p2;
    OccupancyLaw::Probabilities(vec![1.0 - p1 - p2, p1, p2])
}

#[test]
fn refit_of_resynthesized_histogram_is_within_two_sigma() {
    for (truth, mean, seed) in [(waveguide(), 0.45, 100), (membrane(), 1.0, 200)] {
        let shots = 800;
        let h = synth_histogram(&truth, &OccupancyLaw::truncated_poisson(mean, 3), shots, 40.0, seed).unwrap();
        let first = fit_composite_gaussian(&h, 3).unwrap();
        let se = first.standard_errors.clone().expect("well-conditioned fit");

        // Sixteen times the shots shrinks the refit scatter well inside the
        // first fit's error bars.
        let law = OccupancyLaw::Probabilities(first.params.occurrences.clone());
        let h2 = synth_histogram(&first.params, &law, 16 * shots, 40.0, seed + 1).unwrap();
        let second = fit_composite_gaussian(&h2, 3).unwrap();

        let a = &first.params;
        let b = &second.params;
        let scalars = [(a.i_bg, b.i_bg), (a.w_bg, b.w_bg), (a.i_a, b.i_a), (a.w, b.w)];
        for (k, (x, y)) in scalars.iter().enumerate() {
            let sigma = se[4 + k];
            assert!((x - y).abs() < 2.0 * sigma, "parameter {k}: {x} vs {y} (sigma {sigma})");
        }
        for (n, sigma) in se.iter().take(4).enumerate() {
            let x = a.occurrences[n];
            let y = b.occurrences[n] / 16.0;
            assert!(
                (x - y).abs() < 2.0 * sigma.max(1.0),
                "P_{n}: {x} vs {y} (sigma {sigma})"
            );
        }
    }
}

#[test]
fn poisson_mean_is_recovered_from_both_setups() {
    for (truth, mean, seed) in [(waveguide(), 0.45, 7), (membrane(), 1.0, 8)] {
        let h = synth_histogram(&truth, &OccupancyLaw::truncated_poisson(mean, 3), 800, 40.0, seed).unwrap();
        let fit = fit_composite_gaussian(&h, 3).unwrap();
        let pf = fit_poisson(&fit.occupancy).unwrap();
        assert!((pf.mean - mean).abs() < 0.1, "{} vs {mean}", pf.mean);
        assert!((fit.params.total() / 800.0 - 1.0).abs() < 0.01);
    }
}

#[test]
fn narrowed_ensemble_is_flagged_sub_poissonian() {
    let h = synth_histogram(&membrane(), &three_point_law(0.77, 0.35), 800, 40.0, 9).unwrap();
    let fit = fit_composite_gaussian(&h, 3).unwrap();
    let pf = fit_poisson(&fit.occupancy).unwrap();
    assert!(pf.sub_poissonian, "Fano {}", pf.fano_factor);
    assert!((fit.occupancy.mean - 0.77).abs() < 0.1);
}

#[test]
fn poissonian_ensemble_is_not_flagged() {
    let h = synth_histogram(&membrane(), &OccupancyLaw::truncated_poisson(0.8, 3), 3200, 40.0, 10).unwrap();
    let fit = fit_composite_gaussian(&h, 3).unwrap();
    let pf = fit_poisson(&fit.occupancy).unwrap();
    // Truncation at three atoms narrows the law slightly.
    assert!(pf.fano_factor > 0.85, "Fano {}", pf.fano_factor);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn fitted_occupancy_is_a_distribution(seed in 0u64..10_000, mean in 0.2f64..1.5) {
        let h = synth_histogram(&membrane(), &OccupancyLaw::truncated_poisson(mean, 3), 800, 40.0, seed).unwrap();
        let fit = fit_composite_gaussian(&h, 3).unwrap();
        let p = &fit.occupancy.probabilities;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!(fit.params.i_a > 0.0 && fit.params.w_bg > 0.0);
    }
}
