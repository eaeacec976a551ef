//! Numerical laboratory for the long-time behaviour of finite-dimensional
//! isolated quantum systems on an energy shell: normal typicality of
//! macro-decompositions, exact time averages in the energy eigenbasis,
//! concentration of measure, macroscopic entropy and thermal-equilibrium
//! predicates.
//!
//! All dynamics use units with `ħ = 1` and run in the energy eigenbasis,
//! where the propagator is diagonal.

pub mod dynamics;
pub mod entropy;
pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod sampling;
pub mod spectra;
pub mod typicality;

pub use error::{Error, Result};
pub use faer::c64;
