//! Dense exact simulator: the measurement source for end-to-end runs and the
//! brute-force oracle the expansions are checked against.

mod dense;
mod workflows;

use std::collections::HashMap;
use std::sync::RwLock;

use num_complex::Complex64;
use rand::RngCore;

pub use dense::{
    basis_distribution, density_qubit_cap, exact_evolve, exact_expectation, generate_shadows,
    generate_shadows_cached, hermitian_exp, letter_matrix, operator_norm, pauli_expectation,
    pauli_matrix, qubit_cap, sample_pauli_measurement, set_qubit_caps, sum_to_matrix, DenseState,
    DenseStateFile, Representation, ShadowCache, StoredRepresentation, DEFAULT_DENSITY_QUBIT_CAP,
    DEFAULT_QUBIT_CAP,
};
pub use workflows::{
    bound_report, heisenberg_expand, imaginary_time_energy, partition_trace, resolve_plan,
    verify_hamiltonian_residual, EnergyOutcome, Normalization, PartitionOutcome, Plan, MAX_AUTO_SHOTS, MIN_EPS,
    VerifyOutcome, WorkflowConfig,
};

use crate::error::Result;
use crate::estimation::{MeasurementSource, ShadowSnapshot};
use crate::pauli::PauliString;

/// Measurement source backed by a dense state. Expectations are memoized per string.
#[derive(Debug)]
pub struct ExactSource {
    state: DenseState,
    expectations: RwLock<HashMap<PauliString, Complex64>>,
    shadows: ShadowCache,
}

impl ExactSource {
    pub fn new(state: DenseState) -> Self {
        ExactSource {
            state,
            expectations: RwLock::default(),
            shadows: ShadowCache::default(),
        }
    }

    pub fn state(&self) -> &DenseState {
        &self.state
    }

    fn expectation(&self, q: &PauliString) -> Result<Complex64> {
        if let Some(v) = self.expectations.read().expect("cache poisoned").get(q) {
            return Ok(*v);
        }
        let v = pauli_expectation(q, &self.state)?;
        self.expectations.write().expect("cache poisoned").insert(q.clone(), v);
        Ok(v)
    }
}

impl MeasurementSource for ExactSource {
    fn n_qubits(&self) -> usize {
        self.state.n_qubits()
    }

    fn sample_pauli(&self, q: &PauliString, rng: &mut dyn RngCore) -> Result<i8> {
        if q.is_identity() {
            return Ok(1);
        }
        Ok(dense::outcome_from_mean(self.expectation(q)?.re, rng))
    }

    fn draw_shadows(&self, count: usize, rng: &mut dyn RngCore) -> Result<Vec<ShadowSnapshot>> {
        generate_shadows_cached(&self.state, count, rng, &self.shadows)
    }

    fn exact_pauli(&self, q: &PauliString) -> Option<Result<Complex64>> {
        Some(self.expectation(q))
    }
}
