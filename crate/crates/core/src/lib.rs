//! Fractional exterior calculus: Riemann-Liouville differintegrals of scalar
//! fields, matrix orders, fractional differential forms, and fractional
//! coordinate transformations.

pub mod cli;
pub mod coords;
pub mod covariant;
pub mod differint;
pub mod error;
pub mod expr;
pub mod exterior;
pub mod field;
pub mod forms;
pub mod identities;
pub mod matrix;
pub mod par;
pub mod special;

pub use error::{Error, Result};
