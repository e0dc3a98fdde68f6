//! Approximate Bayesian inference for small neural-network regression.
//!
//! Five posterior approximations share one model definition ([`model`]):
//! MAP, mean-field and full-covariance variational inference ([`vi`]),
//! the Gauss-Newton Laplace approximation with sampled or linearised
//! prediction ([`laplace`]), and Hamiltonian Monte Carlo ([`hmc`]).
//! [`data`] provides dataset loading and the gap-split protocol, [`analysis`]
//! the predictive metrics and output-variance convexity checks, and
//! [`bench`] the grid-searched benchmark runner.

pub mod error;
pub mod numerics;
pub mod par;
pub mod model;
pub mod data;
pub mod vi;
pub mod laplace;
pub mod hmc;
pub mod analysis;
pub mod bench;
pub mod synth;
pub mod checkpoint;
pub mod theory;
pub mod plot;

pub use error::{Error, Result};
