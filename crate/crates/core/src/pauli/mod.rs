//! Pauli strings and complex-weighted Pauli sums.

mod string;
mod sum;

pub use string::{multiply, weight, PauliLetter, PauliString, Phase};
pub use sum::{
    canonicalize, commutator, identity_coefficient, sum_add_term, sum_multiply, PauliSum,
    TermRecord, DEFAULT_TOLERANCE,
};
