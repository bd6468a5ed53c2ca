//! Transfer operators, Green's functions, Martin kernels and conformal
//! measures on countable-state topological Markov shifts.

pub mod boundary;
pub mod dlr;
pub mod duality;
pub mod error;
pub mod green;
pub mod measures;
pub mod modelfile;
pub mod models;
pub mod potential;
pub mod shift;
pub mod transfer;
pub mod walk;

pub use error::{Error, Result};
