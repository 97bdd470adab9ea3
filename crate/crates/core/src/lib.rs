//! One-dimensional drift-diffusion with saturating (bounded) diffusion flux,
//! posed as a gradient flow of a free energy in the 2-Wasserstein geometry.
//!
//! Densities can concentrate into point masses in finite regimes, so measures
//! are carried either as quantile vectors (mass coordinates) or as grid
//! densities plus explicit atoms.  The crate provides:
//!
//! * [`measures`]: the two representations, conversions, and 1-D optimal
//!   transport (distance, coupling oracle, displacement interpolation);
//! * [`model`]: diffusion laws and confining potentials behind trait objects,
//!   selected by name from a registry;
//! * [`functionals`]: free energy, dissipation (Fisher information), and
//!   displacement convexity checks;
//! * [`jko`]: minimizing-movement time stepping in quantile coordinates;
//! * [`steady`]: critical mass, energy minimizers, stationarity analysis;
//! * [`reference`]: an independent finite-volume solver and the drift flow
//!   map used to cross-validate the variational scheme.

pub mod error;
pub mod functionals;
pub mod io;
pub mod jko;
pub mod measures;
pub mod model;
pub mod quad;
pub mod reference;
pub mod rng;
pub mod steady;

pub use error::{CoreError, Result};
pub use quad::Extent;
