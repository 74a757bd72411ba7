//! Least-squares engine and the fluorescence-histogram and transport fits.

pub mod histogram;
pub mod nlls;
pub mod occupancy;
pub mod transport;

use serde::{Deserialize, Serialize};

pub use histogram::{fit_background, fit_composite_gaussian, BackgroundFit, CompositeFit, CompositeGaussianParams};
pub use nlls::{nlls_fit, Bounds, NllsOptions, NllsResult, Termination};
pub use occupancy::{fit_poisson, OccupancyStats, PoissonFit};
pub use transport::{
    fit_exponential_counts, fit_transport_ensemble, synth_transport_data, transport_ensemble,
    transport_expected_counts, ExponentialFit, ExponentialModel, TransportFitOptions, TransportFitResult,
    TransportPoint,
};

/// Convergence information copied from an [`NllsResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub cost: f64,
    pub termination: Termination,
    pub ill_conditioned: bool,
    pub condition_number: f64,
}

impl From<&NllsResult> for FitDiagnostics {
    fn from(r: &NllsResult) -> Self {
        Self {
            iterations: r.iterations,
            evaluations: r.evaluations,
            cost: r.cost,
            termination: r.termination,
            ill_conditioned: r.ill_conditioned,
            condition_number: r.condition_number,
        }
    }
}
