//! Square-lattice dimers: the exact free-fermion solution, the first-order
//! perturbation theory of the plaquette-interacting model, and a Metropolis
//! sampler to test both against simulated height fluctuations.

pub mod error;
pub mod lattice;

pub use error::{DimerError, Result};
pub mod free;
pub mod par;
pub mod quadrature;
pub mod perturbation;
pub mod montecarlo;
