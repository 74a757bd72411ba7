//! Modeling chain for single atoms trapped in optical tweezer lattices above a
//! planar photonic membrane.
//!
//! The crate is organised bottom-up:
//!
//! - [`optics`]: plane-wave reflection and transmission of layered dielectrics.
//! - [`beam`]: scalar angular-spectrum field of a focused tweezer above a stack,
//!   plus the counter-propagating bottom beam.
//! - [`potential`], [`sites`], [`conveyor`]: light-shift and surface potentials,
//!   lattice-site characterization and conveyor-belt kinematics.
//! - [`loading`]: Langevin Monte Carlo of trap loading.
//! - [`imaging`]: photon budget, defocused point-spread function and synthetic
//!   count histograms.
//! - [`fit`]: Levenberg-Marquardt engine and the histogram / transport fits.
//! - [`assembly`]: event-driven simulation of feedback-controlled array assembly.
//!
//! All quantities are SI unless a name says otherwise.

// Negated comparisons are how NaN inputs get rejected throughout.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::needless_range_loop
)]

pub mod assembly;
pub mod beam;
pub mod constants;
pub mod conveyor;
mod error;
pub mod fit;
pub mod grid;
pub mod imaging;
pub mod loading;
pub mod optics;
pub mod potential;
pub mod presets;
pub mod quadrature;
pub mod sites;

pub use error::{Error, Result};
pub use num_complex::Complex64;
