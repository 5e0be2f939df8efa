//! Polarization-aware near-field MIMO modelling: non-uniform XPD across a
//! large array, near/far-field boundaries, dual-polarized channel statistics,
//! permanent-based capacity bounds and transmit covariance optimisation.

pub mod boundary;
pub mod capacity;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod optimizer;
pub mod permanent;
pub mod polarization;

pub use error::{Error, Result};
