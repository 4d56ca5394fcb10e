use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::string::PauliString;
use crate::error::{Error, Result};

/// Coefficients below this magnitude are dropped on merge.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

// Products smaller than this are multiplied on the calling thread.
const PARALLEL_PRODUCT_THRESHOLD: usize = 1 << 12;

/// Canonical complex-weighted sum of Pauli strings.
///
/// Keys are unique and kept in a sorted map, so iteration order (and everything
/// derived from it) is independent of how the sum was built. With `hermitian_hint`
/// set, [`PauliSum::canonicalize`] requires every coefficient to be real; the
/// imaginary-part threshold is `tol · max(1, ‖γ‖₁)` so roundoff from large
/// cancelling intermediate coefficients is not mistaken for a phase error.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: BTreeMap<PauliString, Complex64>,
    hermitian_hint: bool,
    tol: f64,
}

impl PauliSum {
    pub fn new(n_qubits: usize) -> Self {
        PauliSum {
            n_qubits,
            terms: BTreeMap::new(),
            hermitian_hint: false,
            tol: DEFAULT_TOLERANCE,
        }
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self::from_term(Complex64::new(1.0, 0.0), PauliString::identity(n_qubits))
    }

    pub fn from_term(c: Complex64, p: PauliString) -> Self {
        let mut s = Self::new(p.n_qubits());
        s.add_term(c, p).expect("dimensions agree by construction");
        s
    }

    pub fn from_terms<I>(n_qubits: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Complex64, PauliString)>,
    {
        let mut s = Self::new(n_qubits);
        for (c, p) in terms {
            s.add_term(c, p)?;
        }
        Ok(s)
    }

    /// Parse `[(coeff, "XYZ"), ...]` with real coefficients; handy in tests and examples.
    pub fn from_real_terms(terms: &[(f64, &str)]) -> Result<Self> {
        let first = terms.first().ok_or(Error::EmptySum)?;
        let n = first.1.len();
        let mut s = Self::new(n);
        for &(c, p) in terms {
            s.add_term(Complex64::new(c, 0.0), p.parse()?)?;
        }
        Ok(s)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_hermitian_hint(mut self, hint: bool) -> Self {
        self.hermitian_hint = hint;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or_default()
    }

    /// Increment the coefficient of `p` by `c`, dropping it if the result is below tolerance.
    pub fn add_term(&mut self, c: Complex64, p: PauliString) -> Result<()> {
        Error::check_dims(self.n_qubits, p.n_qubits())?;
        let entry = self.terms.entry(p);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + c;
                if v.norm() < self.tol {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                if c.norm() >= self.tol {
                    v.insert(c);
                }
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &PauliSum) -> Result<PauliSum> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &PauliSum) -> Result<()> {
        Error::check_dims(self.n_qubits, other.n_qubits)?;
        for (p, c) in &other.terms {
            self.add_term(*c, p.clone())?;
        }
        Ok(())
    }

    pub fn scale(&self, factor: Complex64) -> PauliSum {
        let mut out = PauliSum {
            terms: BTreeMap::new(),
            ..self.clone()
        };
        for (p, c) in &self.terms {
            let v = c * factor;
            if v.norm() >= self.tol {
                out.terms.insert(p.clone(), v);
            }
        }
        out
    }

    /// Adjoint: conjugated coefficients on the same (Hermitian) strings.
    pub fn adjoint(&self) -> PauliSum {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.conj();
        }
        out
    }

    /// Distributed, phase-tracked product `self · other`.
    ///
    /// Large products are evaluated in parallel per left-hand term; partial results
    /// are merged in left-term order so the floating-point result is identical to a
    /// sequential evaluation.
    pub fn multiply(&self, other: &PauliSum) -> Result<PauliSum> {
        Error::check_dims(self.n_qubits, other.n_qubits)?;
        let right: Vec<(&PauliString, &Complex64)> = other.terms.iter().collect();
        let row = |(pa, ca): (&PauliString, &Complex64)| -> Vec<(PauliString, Complex64)> {
            right
                .iter()
                .map(|(pb, cb)| {
                    let (phase, p) = pa.multiply_unchecked(pb);
                    (p, ca * *cb * phase.to_complex())
                })
                .collect()
        };
        let rows: Vec<Vec<(PauliString, Complex64)>> =
            if self.terms.len() * right.len() >= PARALLEL_PRODUCT_THRESHOLD {
                let left: Vec<_> = self.terms.iter().collect();
                left.into_par_iter().map(row).collect()
            } else {
                self.terms.iter().map(row).collect()
            };
        Ok(self.merged(rows.into_iter().flatten()))
    }

    /// `[self, other] = self·other − other·self`, evaluated termwise with only the
    /// anticommuting pairs contributing.
    pub fn commutator(&self, other: &PauliSum) -> Result<PauliSum> {
        Error::check_dims(self.n_qubits, other.n_qubits)?;
        let mut items = Vec::new();
        for (pa, ca) in &self.terms {
            for (pb, cb) in &other.terms {
                if pa.anticommutes_with(pb)? {
                    let (phase, p) = pa.multiply_unchecked(pb);
                    items.push((p, ca * cb * phase.to_complex() * 2.0));
                }
            }
        }
        Ok(self.merged(items.into_iter()))
    }

    fn empty_like(&self) -> PauliSum {
        PauliSum {
            n_qubits: self.n_qubits,
            terms: BTreeMap::new(),
            hermitian_hint: false,
            tol: self.tol,
        }
    }

    fn merged(&self, items: impl Iterator<Item = (PauliString, Complex64)>) -> PauliSum {
        let mut acc: HashMap<PauliString, Complex64> = HashMap::new();
        for (p, c) in items {
            *acc.entry(p).or_default() += c;
        }
        let mut out = self.empty_like();
        out.terms = acc
            .into_iter()
            .filter(|(_, c)| c.norm() >= self.tol)
            .collect();
        out
    }

    /// Coefficient of the all-identity string; `2^n` times this is the trace.
    pub fn identity_coefficient(&self) -> Complex64 {
        self.coefficient(&PauliString::identity(self.n_qubits))
    }

    /// `Σ |γ_i|`.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    pub fn max_weight(&self) -> usize {
        self.terms.keys().map(PauliString::weight).max().unwrap_or(0)
    }

    /// Largest imaginary part magnitude over all coefficients.
    pub fn max_imag(&self) -> f64 {
        self.terms.values().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn real_part(&self) -> PauliSum {
        self.map_coefficients(|c| Complex64::new(c.re, 0.0))
    }

    pub fn imag_part(&self) -> PauliSum {
        self.map_coefficients(|c| Complex64::new(c.im, 0.0))
    }

    fn map_coefficients(&self, f: impl Fn(Complex64) -> Complex64) -> PauliSum {
        let mut out = self.empty_like();
        out.hermitian_hint = self.hermitian_hint;
        for (p, c) in &self.terms {
            let v = f(*c);
            if v.norm() >= self.tol {
                out.terms.insert(p.clone(), v);
            }
        }
        out
    }

    /// Drop coefficients below `tol`; with the Hermitian hint, zero sub-tolerance
    /// imaginary parts and reject anything larger.
    pub fn canonicalize(&self, tol: f64) -> Result<PauliSum> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} must be >= 0")));
        }
        let imag_tol = tol * self.l1_norm().max(1.0);
        let mut out = self.empty_like();
        out.tol = tol;
        out.hermitian_hint = self.hermitian_hint;
        for (p, c) in &self.terms {
            let mut v = *c;
            if self.hermitian_hint {
                if v.im.abs() > imag_tol {
                    return Err(Error::HermiticityViolation {
                        pauli: p.to_string(),
                        imag: v.im,
                        tol: imag_tol,
                    });
                }
                v.im = 0.0;
            }
            if v.norm() >= tol {
                out.terms.insert(p.clone(), v);
            }
        }
        Ok(out)
    }

    /// Largest coefficient-wise distance to `other`, treating missing keys as zero.
    pub fn max_coefficient_distance(&self, other: &PauliSum) -> f64 {
        let mut d: f64 = 0.0;
        for (p, c) in &self.terms {
            d = d.max((c - other.coefficient(p)).norm());
        }
        for (p, c) in &other.terms {
            if !self.terms.contains_key(p) {
                d = d.max(c.norm());
            }
        }
        d
    }
}

/// Functional form of [`PauliSum::add_term`].
pub fn sum_add_term(s: &PauliSum, c: Complex64, p: PauliString) -> Result<PauliSum> {
    let mut out = s.clone();
    out.add_term(c, p)?;
    Ok(out)
}

pub fn sum_multiply(a: &PauliSum, b: &PauliSum) -> Result<PauliSum> {
    a.multiply(b)
}

/// `[a, b]` for two strings: empty when they commute, else `2·i^p·(ab)`.
pub fn commutator(a: &PauliString, b: &PauliString) -> Result<PauliSum> {
    let mut out = PauliSum::new(a.n_qubits());
    if a.anticommutes_with(b)? {
        let (phase, p) = a.multiply_unchecked(b);
        out.add_term(phase.to_complex() * 2.0, p)?;
    }
    Ok(out)
}

pub fn identity_coefficient(s: &PauliSum) -> Complex64 {
    s.identity_coefficient()
}

pub fn canonicalize(s: &PauliSum, tol: f64) -> Result<PauliSum> {
    s.canonicalize(tol)
}

/// One `(pauli, re, im)` record; the serialized form of a [`PauliSum`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TermRecord {
    pub pauli: PauliString,
    pub re: f64,
    pub im: f64,
}

impl PauliSum {
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|(p, c)| TermRecord {
                pauli: p.clone(),
                re: c.re,
                im: c.im,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn commutator_examples() {
        let xz = commutator(&p("X"), &p("Z")).unwrap();
        assert_eq!(xz.len(), 1);
        assert_eq!(xz.coefficient(&p("Y")), c(0.0, -2.0));
        assert!(commutator(&p("X"), &p("X")).unwrap().is_empty());
        assert!(commutator(&p("XI"), &p("IZ")).unwrap().is_empty());
    }

    #[test]
    fn add_term_examples() {
        let s = sum_add_term(&PauliSum::new(2), c(0.5, 0.0), p("XX")).unwrap();
        assert_eq!(s.coefficient(&p("XX")), c(0.5, 0.0));
        assert!(sum_add_term(&s, c(-0.5, 0.0), p("XX")).unwrap().is_empty());
        let s2 = sum_add_term(&s, c(0.0, 0.25), p("YY")).unwrap();
        assert_eq!(s2.len(), 2);
        assert_eq!(s2.coefficient(&p("YY")), c(0.0, 0.25));
        assert!(matches!(
            sum_add_term(&s, c(1.0, 0.0), p("X")),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn multiply_examples() {
        let a = PauliSum::from_real_terms(&[(1.0, "I"), (1.0, "X")]).unwrap();
        let b = PauliSum::from_real_terms(&[(1.0, "I"), (-1.0, "X")]).unwrap();
        assert!(sum_multiply(&a, &b).unwrap().is_empty());

        let xx = PauliSum::from_real_terms(&[(0.5, "XX")]).unwrap();
        let yy = PauliSum::from_real_terms(&[(0.5, "YY")]).unwrap();
        let prod = sum_multiply(&xx, &yy).unwrap();
        assert_eq!(prod.len(), 1);
        assert_eq!(prod.coefficient(&p("ZZ")), c(-0.25, 0.0));

        let s = PauliSum::from_real_terms(&[(0.3, "XZ"), (-1.5, "YY")]).unwrap();
        assert_eq!(sum_multiply(&s, &PauliSum::identity(2)).unwrap(), s);
    }

    #[test]
    fn identity_coefficient_examples() {
        let s = PauliSum::from_real_terms(&[(0.5, "II"), (0.3, "XX")]).unwrap();
        assert_eq!(identity_coefficient(&s), c(0.5, 0.0));
        assert_eq!(identity_coefficient(&PauliSum::new(2)), c(0.0, 0.0));
    }

    #[test]
    fn canonicalize_examples() {
        let s = PauliSum::from_terms(1, [(c(0.99, 1e-15), p("Z"))])
            .unwrap()
            .with_hermitian_hint(true);
        let out = canonicalize(&s, 1e-12).unwrap();
        assert_eq!(out.coefficient(&p("Z")), c(0.99, 0.0));

        let bad = PauliSum::from_terms(1, [(c(0.99, 0.3), p("Z"))])
            .unwrap()
            .with_hermitian_hint(true);
        assert!(matches!(
            canonicalize(&bad, 1e-12),
            Err(Error::HermiticityViolation { .. })
        ));

        let mut tiny = PauliSum::new(1).with_tolerance(0.0);
        tiny.add_term(c(1e-14, 0.0), p("Z")).unwrap();
        assert_eq!(tiny.len(), 1);
        assert!(canonicalize(&tiny, 1e-12).unwrap().is_empty());
    }

    #[test]
    fn commutator_of_sums_matches_products() {
        let a = PauliSum::from_real_terms(&[(0.7, "XY"), (-0.2, "ZI"), (1.1, "IY")]).unwrap();
        let b = PauliSum::from_real_terms(&[(0.4, "ZZ"), (0.9, "XI")]).unwrap();
        let direct = a.commutator(&b).unwrap();
        let via_products = a
            .multiply(&b)
            .unwrap()
            .add(&b.multiply(&a).unwrap().scale(c(-1.0, 0.0)))
            .unwrap();
        assert!(direct.max_coefficient_distance(&via_products) < 1e-14);
    }
}
