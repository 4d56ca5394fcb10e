//! Hamiltonians, observables and initial states, and their plain-text formats.
//!
//! Hamiltonian and observable files hold one `coeff pauli_string` pair per line;
//! blank lines and anything after `#` are ignored. Coefficients are real.
//! Duplicate strings are merged by adding coefficients.

use std::collections::BTreeMap;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{PauliLetter, PauliString, PauliSum};

/// `H = Σ α_ℓ H_ℓ` with real nonzero `α_ℓ` and distinct non-identity strings.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
    lambda: f64,
    max_weight: usize,
}

impl HamiltonianSpec {
    /// Build from explicit terms, merging duplicates and dropping exact zeros.
    pub fn from_terms(n_qubits: usize, terms: impl IntoIterator<Item = (f64, PauliString)>) -> Result<Self> {
        let mut merged: BTreeMap<PauliString, f64> = BTreeMap::new();
        let mut order = Vec::new();
        for (c, p) in terms {
            Error::check_dims(n_qubits, p.n_qubits())?;
            if p.is_identity() {
                return Err(Error::InvalidArgument(
                    "identity term in Hamiltonian (shift the energy instead)".into(),
                ));
            }
            if !c.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient {c}")));
            }
            match merged.get_mut(&p) {
                Some(v) => *v += c,
                None => {
                    order.push(p.clone());
                    merged.insert(p, c);
                }
            }
        }
        let terms: Vec<(f64, PauliString)> = order
            .into_iter()
            .filter_map(|p| {
                let c = merged[&p];
                (c != 0.0).then_some((c, p))
            })
            .collect();
        if terms.is_empty() {
            return Err(Error::InvalidArgument("Hamiltonian has no terms".into()));
        }
        let lambda = terms.iter().map(|(c, _)| c.abs()).sum();
        let max_weight = terms.iter().map(|(_, p)| p.weight()).max().unwrap_or(0);
        Ok(HamiltonianSpec {
            n_qubits,
            terms,
            lambda,
            max_weight,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    /// `λ = Σ |α_ℓ|`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `L`, the number of terms.
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// `w`, the largest Pauli weight among the terms.
    pub fn max_weight(&self) -> usize {
        self.max_weight
    }

    pub fn to_sum(&self) -> PauliSum {
        let mut s = PauliSum::new(self.n_qubits);
        for (c, p) in &self.terms {
            s.add_term(Complex64::new(*c, 0.0), p.clone())
                .expect("terms share the Hamiltonian's qubit count");
        }
        s.with_hermitian_hint(true)
    }

    /// `-H`; evolving under it for time `t` runs the original dynamics backwards.
    pub fn negated(&self) -> Self {
        HamiltonianSpec {
            terms: self.terms.iter().map(|(c, p)| (-c, p.clone())).collect(),
            ..self.clone()
        }
    }

    /// Copy with the coefficient of `pauli` replaced (or added).
    pub fn with_coefficient(&self, pauli: &PauliString, value: f64) -> Result<Self> {
        let mut terms: Vec<_> = self
            .terms
            .iter()
            .filter(|(_, p)| p != pauli)
            .cloned()
            .collect();
        terms.push((value, pauli.clone()));
        Self::from_terms(self.n_qubits, terms)
    }

    /// Text form accepted by [`parse_hamiltonian`]; floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_text(&self) -> String {
        self.terms
            .iter()
            .map(|(c, p)| format!("{c:?} {p}\n"))
            .collect()
    }
}

fn parse_lines(text: &str) -> Result<(usize, Vec<(f64, PauliString, usize)>)> {
    let mut n_qubits: Option<usize> = None;
    let mut terms = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut fields = line.split_whitespace();
        let (coeff, pauli) = match (fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(p), None) => (c, p),
            _ => return Err(err(format!("expected `coeff pauli_string`, got {line:?}"))),
        };
        let coeff: f64 = coeff
            .replace('\u{2212}', "-")
            .parse()
            .map_err(|_| err(format!("malformed coefficient {coeff:?}")))?;
        if !coeff.is_finite() {
            return Err(err(format!("non-finite coefficient {coeff}")));
        }
        let pauli: PauliString = pauli.parse().map_err(|e: Error| err(e.to_string()))?;
        match n_qubits {
            None => n_qubits = Some(pauli.n_qubits()),
            Some(n) if n != pauli.n_qubits() => {
                return Err(err(format!(
                    "string {pauli} has {} qubits, earlier lines have {n}",
                    pauli.n_qubits()
                )))
            }
            _ => {}
        }
        if pauli.n_qubits() == 0 {
            return Err(err("empty Pauli string".into()));
        }
        terms.push((coeff, pauli, line_no));
    }
    let n = n_qubits.ok_or(Error::Parse {
        line: 0,
        message: "no terms".into(),
    })?;
    Ok((n, terms))
}

/// Parse the `coeff pauli_string` line format into a Hamiltonian.
pub fn parse_hamiltonian(text: &str) -> Result<HamiltonianSpec> {
    let (n, terms) = parse_lines(text)?;
    if let Some((_, _, line)) = terms.iter().find(|(_, p, _)| p.is_identity()) {
        return Err(Error::Parse {
            line: *line,
            message: "all-identity term is not allowed in a Hamiltonian".into(),
        });
    }
    let terms = terms.into_iter().map(|(c, p, _)| (c, p));
    HamiltonianSpec::from_terms(n, terms).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Parse { line: 0, message: m },
        other => other,
    })
}

/// Open-chain Heisenberg model `Σ_i J (X_i X_{i+1} + Y_i Y_{i+1} + Z_i Z_{i+1})`.
pub fn build_heisenberg_chain(n: usize, coupling: f64) -> Result<HamiltonianSpec> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Heisenberg chain needs at least 2 sites, got {n}"
        )));
    }
    if coupling == 0.0 || !coupling.is_finite() {
        return Err(Error::InvalidArgument(format!("coupling must be finite and nonzero, got {coupling}")));
    }
    let mut terms = Vec::with_capacity(3 * (n - 1));
    for i in 0..n - 1 {
        for letter in [PauliLetter::X, PauliLetter::Y, PauliLetter::Z] {
            let mut p = PauliString::identity(n);
            p.set(i, letter);
            p.set(i + 1, letter);
            terms.push((coupling, p));
        }
    }
    HamiltonianSpec::from_terms(n, terms)
}

/// Real-coefficient observable with its maximum weight and a norm certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    observable: PauliSum,
    max_weight: usize,
    norm_bound: f64,
}

impl ObservableSpec {
    /// Wrap a Pauli sum; the coefficients must be real. The norm bound defaults to `Σ|c|`.
    pub fn new(observable: PauliSum) -> Result<Self> {
        if let Some((p, c)) = observable.iter().find(|(_, c)| c.im != 0.0) {
            return Err(Error::ComplexCoefficient {
                pauli: p.to_string(),
                imag: c.im,
            });
        }
        let observable = observable.with_hermitian_hint(true);
        Ok(ObservableSpec {
            max_weight: observable.max_weight(),
            norm_bound: observable.l1_norm(),
            observable,
        })
    }

    pub fn pauli(p: PauliString) -> Self {
        Self::new(PauliSum::from_term(Complex64::new(1.0, 0.0), p)).expect("real coefficient")
    }

    /// Override the norm certificate with a tighter (user-certified) value.
    pub fn with_norm_bound(mut self, norm_bound: f64) -> Result<Self> {
        if !(norm_bound >= 0.0) {
            return Err(Error::InvalidArgument(format!("norm bound {norm_bound} must be >= 0")));
        }
        self.norm_bound = norm_bound;
        Ok(self)
    }

    pub fn observable(&self) -> &PauliSum {
        &self.observable
    }

    pub fn n_qubits(&self) -> usize {
        self.observable.n_qubits()
    }

    pub fn max_weight(&self) -> usize {
        self.max_weight
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn to_text(&self) -> String {
        self.observable
            .iter()
            .map(|(p, c)| format!("{:?} {p}\n", c.re))
            .collect()
    }
}

/// Parse an observable in the Hamiltonian line format (identity terms allowed).
pub fn parse_observable(text: &str) -> Result<ObservableSpec> {
    let (n, terms) = parse_lines(text)?;
    let mut s = PauliSum::new(n);
    for (c, p, _) in terms {
        s.add_term(Complex64::new(c, 0.0), p)?;
    }
    ObservableSpec::new(s)
}

/// `Σ_i (-1)^i Z_i`, the staggered magnetization (particle imbalance).
pub fn staggered_magnetization(n: usize) -> ObservableSpec {
    let mut s = PauliSum::new(n);
    for i in 0..n {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        s.add_term(Complex64::new(sign, 0.0), PauliString::single(n, i, PauliLetter::Z))
            .expect("same qubit count");
    }
    ObservableSpec::new(s).expect("real coefficients")
}

/// Initial-state description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    /// Computational basis state, qubit 0 leftmost.
    Basis { bits: String },
    /// `|+⟩^{⊗n}`.
    PlusProduct { n_qubits: usize },
    /// Density matrix stored in a JSON container file.
    DensityFile { path: PathBuf },
}

impl StateSpec {
    pub fn n_qubits(&self) -> Option<usize> {
        match self {
            StateSpec::Basis { bits } => Some(bits.len()),
            StateSpec::PlusProduct { n_qubits } => Some(*n_qubits),
            StateSpec::DensityFile { .. } => None,
        }
    }
}

fn parse_count(s: &str, preset: &str) -> Result<usize> {
    s.parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{preset}: expected a positive qubit count, got {s:?}")))
}

/// Parse `neel:n`, `basis:<bits>`, `plus:n`, `file:<path>` or a bare path to a
/// density-matrix file.
pub fn parse_state(spec: &str) -> Result<StateSpec> {
    let spec = spec.trim();
    match spec.split_once(':') {
        Some(("neel", n)) => {
            let n = parse_count(n, "neel")?;
            Ok(StateSpec::Basis {
                bits: (0..n).map(|i| if i % 2 == 0 { '0' } else { '1' }).collect(),
            })
        }
        Some(("basis", bits)) => {
            if bits.is_empty() {
                return Err(Error::InvalidArgument("basis: empty bit string".into()));
            }
            if let Some(bad) = bits.chars().find(|c| *c != '0' && *c != '1') {
                return Err(Error::InvalidBitChar(bad));
            }
            Ok(StateSpec::Basis { bits: bits.to_string() })
        }
        Some(("plus", n)) => Ok(StateSpec::PlusProduct {
            n_qubits: parse_count(n, "plus")?,
        }),
        Some(("file", path)) => Ok(StateSpec::DensityFile { path: path.into() }),
        Some((prefix, _)) if !prefix.contains(['/', '\\', '.']) && prefix.len() > 1 => {
            Err(Error::UnknownPreset(prefix.to_string()))
        }
        _ => Ok(StateSpec::DensityFile { path: spec.into() }),
    }
}
