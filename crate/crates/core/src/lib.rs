//! Short-time Heisenberg-picture dynamics from Pauli measurements.
//!
//! Observables are evolved symbolically as sums of Pauli strings by truncated
//! Taylor or nested-commutator expansions, the truncation and sampling errors are
//! bounded a priori, and the resulting sums are estimated from single-qubit Pauli
//! measurements by importance sampling or local classical shadows. A dense
//! simulator for small systems provides exact reference values.

pub mod bounds;
pub mod error;
pub mod estimation;
pub mod expansion;
pub mod model;
pub mod pauli;
pub mod reference;

pub use error::{Error, Result};
pub use num_complex::Complex64;
