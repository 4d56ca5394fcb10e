use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{Error, Result};

type Words = SmallVec<[u64; 2]>;

fn word_count(n_qubits: usize) -> usize {
    n_qubits.div_ceil(64)
}

/// Power of `i` carried by a Pauli product, `i^exponent` with exponent in 0..4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn new(exponent: u32) -> Self {
        Phase((exponent % 4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl std::ops::Add for Phase {
    type Output = Phase;
    fn add(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => PauliLetter::I,
            (true, false) => PauliLetter::X,
            (true, true) => PauliLetter::Y,
            (false, true) => PauliLetter::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            PauliLetter::I => (false, false),
            PauliLetter::X => (true, false),
            PauliLetter::Y => (true, true),
            PauliLetter::Z => (false, true),
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'I' => Ok(PauliLetter::I),
            'X' => Ok(PauliLetter::X),
            'Y' => Ok(PauliLetter::Y),
            'Z' => Ok(PauliLetter::Z),
            other => Err(Error::InvalidPauliChar(other)),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            PauliLetter::I => 'I',
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }
}

/// Phase-free n-qubit Pauli string in the symplectic (x, z) encoding.
///
/// Qubit `q` holds I/X/Y/Z for `(x, z)` = (0,0)/(1,0)/(1,1)/(0,1). The text form
/// writes one letter per qubit with qubit 0 leftmost. Unused high bits of the last
/// word are always zero so that derived equality, hashing and ordering are canonical.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n_qubits: usize,
    x: Words,
    z: Words,
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        let words = word_count(n_qubits);
        PauliString {
            n_qubits,
            x: SmallVec::from_elem(0, words),
            z: SmallVec::from_elem(0, words),
        }
    }

    /// A single non-trivial letter on `qubit`, identity elsewhere.
    pub fn single(n_qubits: usize, qubit: usize, letter: PauliLetter) -> Self {
        let mut p = Self::identity(n_qubits);
        p.set(qubit, letter);
        p
    }

    pub fn from_letters(letters: &[PauliLetter]) -> Self {
        let mut p = Self::identity(letters.len());
        for (q, &l) in letters.iter().enumerate() {
            p.set(q, l);
        }
        p
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_words(&self) -> &[u64] {
        &self.x
    }

    pub fn z_words(&self) -> &[u64] {
        &self.z
    }

    pub fn set(&mut self, qubit: usize, letter: PauliLetter) {
        assert!(qubit < self.n_qubits, "qubit {qubit} out of range");
        let (w, b) = (qubit / 64, qubit % 64);
        let (x, z) = letter.bits();
        self.x[w] = (self.x[w] & !(1 << b)) | ((x as u64) << b);
        self.z[w] = (self.z[w] & !(1 << b)) | ((z as u64) << b);
    }

    pub fn letter(&self, qubit: usize) -> PauliLetter {
        let (w, b) = (qubit / 64, qubit % 64);
        PauliLetter::from_bits((self.x[w] >> b) & 1 == 1, (self.z[w] >> b) & 1 == 1)
    }

    pub fn letters(&self) -> impl Iterator<Item = PauliLetter> + '_ {
        (0..self.n_qubits).map(|q| self.letter(q))
    }

    /// Number of qubits carrying a non-identity letter.
    pub fn weight(&self) -> usize {
        self.x
            .iter()
            .zip(&self.z)
            .map(|(x, z)| (x | z).count_ones() as usize)
            .sum()
    }

    pub fn is_identity(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&w| w == 0)
    }

    /// Qubits on which the string acts non-trivially, ascending.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_qubits).filter(|&q| self.letter(q) != PauliLetter::I)
    }

    /// Parity of the symplectic form `a.x·b.z + a.z·b.x`; `true` means the strings anticommute.
    pub fn anticommutes_with(&self, other: &PauliString) -> Result<bool> {
        Error::check_dims(self.n_qubits, other.n_qubits)?;
        let ones: u32 = (0..self.x.len())
            .map(|w| (self.x[w] & other.z[w]).count_ones() + (self.z[w] & other.x[w]).count_ones())
            .sum();
        Ok(ones % 2 == 1)
    }

    /// `self · other = i^phase · result`.
    pub fn multiply(&self, other: &PauliString) -> Result<(Phase, PauliString)> {
        Error::check_dims(self.n_qubits, other.n_qubits)?;
        Ok(self.multiply_unchecked(other))
    }

    pub(crate) fn multiply_unchecked(&self, other: &PauliString) -> (Phase, PauliString) {
        // With P(x,z) = i^{x·z} X^x Z^z the product picks up
        // i^{x1·z1 + x2·z2 - x3·z3} (-1)^{z1·x2}.
        let mut x = Words::with_capacity(self.x.len());
        let mut z = Words::with_capacity(self.z.len());
        let mut exponent: u32 = 0;
        for w in 0..self.x.len() {
            let (x1, z1, x2, z2) = (self.x[w], self.z[w], other.x[w], other.z[w]);
            let (x3, z3) = (x1 ^ x2, z1 ^ z2);
            exponent += (x1 & z1).count_ones()
                + (x2 & z2).count_ones()
                + 2 * (z1 & x2).count_ones()
                + 3 * (x3 & z3).count_ones();
            x.push(x3);
            z.push(z3);
        }
        (
            Phase::new(exponent),
            PauliString {
                n_qubits: self.n_qubits,
                x,
                z,
            },
        )
    }
}

/// Free-function form of [`PauliString::multiply`].
pub fn multiply(a: &PauliString, b: &PauliString) -> Result<(Phase, PauliString)> {
    a.multiply(b)
}

/// Number of non-identity tensor factors.
pub fn weight(p: &PauliString) -> usize {
    p.weight()
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(PauliLetter::from_char)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_letters(&letters))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.letters() {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn single_qubit_table() {
        assert_eq!(multiply(&p("X"), &p("Y")).unwrap(), (Phase::I, p("Z")));
        assert_eq!(multiply(&p("Y"), &p("X")).unwrap(), (Phase::MINUS_I, p("Z")));
        assert_eq!(multiply(&p("Y"), &p("Z")).unwrap(), (Phase::I, p("X")));
        assert_eq!(multiply(&p("Z"), &p("X")).unwrap(), (Phase::I, p("Y")));
        assert_eq!(multiply(&p("X"), &p("Z")).unwrap(), (Phase::MINUS_I, p("Y")));
    }

    #[test]
    fn squares_and_two_qubit_products() {
        assert_eq!(multiply(&p("XX"), &p("XX")).unwrap(), (Phase::ONE, p("II")));
        assert_eq!(multiply(&p("XY"), &p("YX")).unwrap(), (Phase::ONE, p("ZZ")));
    }

    #[test]
    fn dimension_mismatch() {
        assert_eq!(
            multiply(&p("X"), &p("XX")),
            Err(Error::DimensionMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn weights() {
        assert_eq!(weight(&p("IXYZ")), 3);
        assert_eq!(weight(&p("IIII")), 0);
        assert_eq!(weight(&p("Z")), 1);
    }

    #[test]
    fn text_round_trip_beyond_one_word() {
        let s: String = "XYZI".repeat(40);
        let q = p(&s);
        assert_eq!(q.n_qubits(), 160);
        assert_eq!(q.to_string(), s);
        assert_eq!(q.weight(), 120);
    }

    #[test]
    fn invalid_character() {
        assert_eq!("XQ".parse::<PauliString>(), Err(Error::InvalidPauliChar('Q')));
    }

    #[test]
    fn product_across_word_boundary() {
        let mut a = PauliString::identity(70);
        let mut b = PauliString::identity(70);
        a.set(65, PauliLetter::X);
        b.set(65, PauliLetter::Y);
        let (ph, c) = a.multiply(&b).unwrap();
        assert_eq!(ph, Phase::I);
        assert_eq!(c, PauliString::single(70, 65, PauliLetter::Z));
    }
}
