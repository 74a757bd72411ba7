use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid layer stack: {0}")]
    InvalidStack(String),

    #[error("quadrature did not converge: reached relative change {achieved:.3e} with order {order}")]
    Quadrature { achieved: f64, order: usize },

    #[error("no background mode found in histogram")]
    NoBackgroundMode,

    #[error("peak detection failed: {0}")]
    PeakDetection(String),

    #[error("fit failed to converge after {iterations} iterations (cost {cost:.6e})")]
    NotConverged {
        iterations: usize,
        cost: f64,
        best: Vec<f64>,
    },

    #[error("invalid assembly plan: {0}")]
    InvalidPlan(String),
}
