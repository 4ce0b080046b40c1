//! Orthonormal Laurent polynomials in two real variables.

pub mod dd;
pub mod error;
pub mod kernels;
pub mod lattice;
pub mod linalg;
pub mod moments;
pub mod ortho;
pub mod recurrence;
pub mod univariate;

pub use dd::Dd;
pub use error::{Error, Result};
