//! Numerics for the two-band Hopf insulator: the model Hamiltonian, lattice
//! Berry curvature and Hopf index, spin-preimage links, and a simulator of
//! adiabatic state preparation followed by noisy state tomography.

pub mod adiabatic;
pub mod bzgrid;
pub mod error;
pub mod invariants;
pub mod io;
pub mod model;
pub mod preimage;
pub mod qubit;

pub use error::{HopfError, Result};
