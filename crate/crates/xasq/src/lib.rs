//! Time-domain X-ray absorption spectra from Trotterized, compressed
//! double-factorized electronic Hamiltonians, with the accompanying
//! fault-tolerant resource model.

pub mod cdf;
pub mod error;
pub mod exact;
pub mod integrals;
mod optim;
pub mod rowmajor;
pub mod resources;
pub mod simulator;
pub mod spectrum;
pub mod trotter;

pub use error::{Error, Result};
