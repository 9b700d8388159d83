//! Data-driven optimal control of stochastic linear systems, explicit and
//! descriptor, built from Hankel matrices of measured data and polynomial chaos
//! expansions of the uncertainty.

pub mod error;
pub mod experiment;
pub mod hankel;
pub mod linalg;
pub mod ocp;
pub mod pce;
pub mod solver;
pub mod systems;

pub use error::{Error, Result};
