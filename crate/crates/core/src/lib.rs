//! Simulation and analysis of heralded photon-to-atom polarization transfer
//! in a single ⁴⁰Ca⁺ ion.

pub mod analysis;
pub mod atom;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod eventlog;
pub mod polarization;
pub mod protocol;
pub mod validate;

pub use error::{Error, Result};
