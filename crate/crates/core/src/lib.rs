//! Coupled quantum van der Pol oscillators under conjugate coupling.
//!
//! Three models of the same pair of oscillators are provided and cross-check
//! each other:
//!
//! * [`liouvillian`]: the Lindblad master equation on a truncated two-mode
//!   Fock space, solved for its steady state;
//! * [`classical`]: the deterministic coupled van der Pol equations, their
//!   fixed points, linear stability and bifurcation diagram;
//! * [`semiclassical`]: the noisy classical model (truncated Wigner drift and
//!   diffusion) integrated as an Euler–Maruyama ensemble.
//!
//! [`wigner`] turns a reduced single-mode steady state into a phase-space
//! quasiprobability and classifies it as oscillating, amplitude death or
//! oscillation death. [`cli`] wires everything into the `qvdp` binary.

pub mod classical;
pub mod cli;
pub mod error;
pub mod fock;
pub mod liouvillian;
pub mod params;
pub mod semiclassical;
pub mod sparse;
pub mod wigner;

pub use error::{Error, Result};
pub use params::ModelParams;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
