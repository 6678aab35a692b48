//! Numerical engine for the variational theory of Lagrangian and Hamiltonian
//! systems on loop and path spaces.
//!
//! The crate finds 1-periodic orbits and fixed-endpoint solutions of Tonelli
//! Lagrangians on flat tori and the round two-sphere, computes their Morse
//! indices and the Conley-Zehnder / Maslov indices of their Legendre duals,
//! assembles the Morse complex of the discretized action functional from
//! signed gradient flow lines, and checks the Fredholm index of truncated
//! Cauchy-Riemann type operators against their asymptotic index data.

pub mod catalog;
pub mod error;
pub mod fields;
pub mod fredholm;
pub mod index;
pub mod lagrangian;
pub mod linalg;
pub mod loops;
pub mod manifold;
pub mod morse;
pub mod orbits;
pub mod rng;
pub mod snf;

pub use error::{Error, Result};
