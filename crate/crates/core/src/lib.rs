//! Boundary-driven free-fermion chain under continuous density measurement.
//!
//! Two engines solve the same Lindblad dynamics: [`exact`] works on the full
//! Fock-space density matrix and serves as the oracle, [`covariance`] evolves
//! the two-point function `C_jk = <c_j^dag c_k>` in O(N^2) memory. The
//! [`transport`] module extracts the Fick's-law diffusion coefficient from
//! driven steady states and fits its scaling with the measurement strength;
//! [`theory`] holds the continuum predictions it is compared against.
//! [`trajectories`] unravels the master equation into quantum jumps.

pub mod cli;
pub mod config;
pub mod covariance;
pub mod error;
pub mod exact;
pub mod fermion;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod plot;
pub mod sparse;
pub mod theory;
pub mod trajectories;
pub mod transport;
pub mod validation;

pub use error::{Error, Result};
