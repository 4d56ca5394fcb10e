use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{Basis, ShadowSnapshot};
use crate::expansion::{TimeKind, TimeParameter};
use crate::model::{HamiltonianSpec, StateSpec};
use crate::pauli::{PauliLetter, PauliString, PauliSum};

pub const DEFAULT_QUBIT_CAP: usize = 12;
pub const DEFAULT_DENSITY_QUBIT_CAP: usize = 8;

static QUBIT_CAP: AtomicUsize = AtomicUsize::new(DEFAULT_QUBIT_CAP);
static DENSITY_QUBIT_CAP: AtomicUsize = AtomicUsize::new(DEFAULT_DENSITY_QUBIT_CAP);

const NORM_TOL: f64 = 1e-10;

/// Process-wide qubit cap for state vectors and dense operators.
pub fn qubit_cap() -> usize {
    QUBIT_CAP.load(Ordering::Relaxed)
}

pub fn density_qubit_cap() -> usize {
    DENSITY_QUBIT_CAP.load(Ordering::Relaxed)
}

pub fn set_qubit_caps(vector: usize, density: usize) {
    QUBIT_CAP.store(vector, Ordering::Relaxed);
    DENSITY_QUBIT_CAP.store(density, Ordering::Relaxed);
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::QubitCapExceeded { n, cap })
    } else {
        Ok(())
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Basis-index masks of a string: qubit `q` is bit `n−1−q`, so qubit 0 is the
/// most significant bit (matching `A ⊗ B` ordering).
pub(crate) struct DenseMasks {
    x: usize,
    z: usize,
    y_phase: Complex64,
}

pub(crate) fn dense_masks(p: &PauliString) -> DenseMasks {
    let n = p.n_qubits();
    let (mut x, mut z, mut ys) = (0usize, 0usize, 0u32);
    for (q, l) in p.letters().enumerate() {
        let bit = 1usize << (n - 1 - q);
        let (lx, lz) = l.bits();
        if lx {
            x |= bit;
        }
        if lz {
            z |= bit;
        }
        if lx && lz {
            ys += 1;
        }
    }
    DenseMasks {
        x,
        z,
        y_phase: crate::pauli::Phase::new(ys).to_complex(),
    }
}

impl DenseMasks {
    /// `P|b⟩ = sign · |b ⊕ x⟩`.
    #[inline]
    fn apply(&self, b: usize) -> (usize, Complex64) {
        let sign = if (self.z & b).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        (b ^ self.x, self.y_phase * sign)
    }
}

/// Dense 2×2 Pauli matrix.
pub fn letter_matrix(l: PauliLetter) -> DMatrix<Complex64> {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match l {
        PauliLetter::I => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        PauliLetter::X => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        PauliLetter::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        PauliLetter::Z => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Explicit Kronecker product of the per-qubit 2×2 matrices, qubit 0 leftmost.
pub fn pauli_matrix(p: &PauliString) -> Result<DMatrix<Complex64>> {
    check_cap(p.n_qubits(), qubit_cap())?;
    let mut m = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for l in p.letters() {
        m = m.kronecker(&letter_matrix(l));
    }
    Ok(m)
}

/// `Σ γ_i Q_i` as a dense matrix built from tensor products.
pub fn sum_to_matrix(s: &PauliSum) -> Result<DMatrix<Complex64>> {
    let n = s.n_qubits();
    check_cap(n, qubit_cap())?;
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for (p, coeff) in s.iter() {
        m += pauli_matrix(p)? * *coeff;
    }
    Ok(m)
}

/// Spectral (operator) norm via the largest singular value.
pub fn operator_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// `e^{gH}` for a Hermitian matrix and complex scalar `g`, via eigendecomposition.
pub fn hermitian_exp(h: &DMatrix<Complex64>, g: Complex64) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| (g * e).exp()));
    v * d * v.adjoint()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    StateVector(DVector<Complex64>),
    DensityMatrix(DMatrix<Complex64>),
}

/// Normalized pure or mixed state of `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    n_qubits: usize,
    repr: Representation,
}

impl DenseState {
    pub fn basis(bits: &str) -> Result<Self> {
        let n = bits.len();
        check_cap(n, qubit_cap())?;
        let mut index = 0usize;
        for ch in bits.chars() {
            index = (index << 1)
                | match ch {
                    '0' => 0,
                    '1' => 1,
                    other => return Err(Error::InvalidBitChar(other)),
                };
        }
        let mut v = DVector::zeros(1 << n);
        v[index] = c(1.0, 0.0);
        Ok(DenseState {
            n_qubits: n,
            repr: Representation::StateVector(v),
        })
    }

    pub fn plus_product(n: usize) -> Result<Self> {
        check_cap(n, qubit_cap())?;
        let dim = 1usize << n;
        let amp = c(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(DenseState {
            n_qubits: n,
            repr: Representation::StateVector(DVector::from_element(dim, amp)),
        })
    }

    pub fn from_vector(v: DVector<Complex64>) -> Result<Self> {
        let n = dimension_qubits(v.len())?;
        check_cap(n, qubit_cap())?;
        let norm = v.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("state vector norm {norm} is not 1")));
        }
        Ok(DenseState {
            n_qubits: n,
            repr: Representation::StateVector(v),
        })
    }

    pub fn from_density(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidArgument("density matrix must be square".into()));
        }
        let n = dimension_qubits(m.nrows())?;
        check_cap(n, density_qubit_cap())?;
        let trace = m.trace();
        if (trace - c(1.0, 0.0)).norm() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("density matrix trace {trace} is not 1")));
        }
        if (&m - m.adjoint()).camax() > NORM_TOL {
            return Err(Error::InvalidArgument("density matrix is not Hermitian".into()));
        }
        let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
        if min_eig < -NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix has negative eigenvalue {min_eig}"
            )));
        }
        Ok(DenseState {
            n_qubits: n,
            repr: Representation::DensityMatrix(m),
        })
    }

    pub fn from_spec(spec: &StateSpec) -> Result<Self> {
        match spec {
            StateSpec::Basis { bits } => Self::basis(bits),
            StateSpec::PlusProduct { n_qubits } => Self::plus_product(*n_qubits),
            StateSpec::DensityFile { path } => Self::load(path),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn to_density(&self) -> DMatrix<Complex64> {
        match &self.repr {
            Representation::StateVector(v) => v * v.adjoint(),
            Representation::DensityMatrix(m) => m.clone(),
        }
    }

    /// `tr(ρ)` for density matrices, `‖ψ‖²` for vectors.
    pub fn trace_norm(&self) -> f64 {
        match &self.repr {
            Representation::StateVector(v) => v.norm_squared(),
            Representation::DensityMatrix(m) => m.trace().re,
        }
    }

    /// Apply `M` (not necessarily unitary) as `Mψ` or `MρM†`.
    fn transformed(&self, m: &DMatrix<Complex64>) -> Representation {
        match &self.repr {
            Representation::StateVector(v) => Representation::StateVector(m * v),
            Representation::DensityMatrix(r) => Representation::DensityMatrix(m * r * m.adjoint()),
        }
    }

    fn renormalized(n_qubits: usize, repr: Representation) -> Result<Self> {
        let repr = match repr {
            Representation::StateVector(v) => {
                let norm = v.norm();
                if norm == 0.0 {
                    return Err(Error::InvalidArgument("state annihilated".into()));
                }
                Representation::StateVector(v / c(norm, 0.0))
            }
            Representation::DensityMatrix(m) => {
                let tr = m.trace().re;
                if tr == 0.0 {
                    return Err(Error::InvalidArgument("state annihilated".into()));
                }
                Representation::DensityMatrix(m / c(tr, 0.0))
            }
        };
        Ok(DenseState { n_qubits, repr })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let file: DenseStateFile =
            serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        file.into_state()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&DenseStateFile::from_state(self)).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn dimension_qubits(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("dimension {dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// JSON container for dense states: row-major `[re, im]` entries.
///
/// ```json
/// {"n_qubits": 1, "representation": "density-matrix",
///  "entries": [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]}
/// ```
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DenseStateFile {
    pub n_qubits: usize,
    pub representation: StoredRepresentation,
    pub entries: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum StoredRepresentation {
    StateVector,
    DensityMatrix,
}

impl DenseStateFile {
    pub fn from_state(s: &DenseState) -> Self {
        let (representation, entries) = match &s.repr {
            Representation::StateVector(v) => (
                StoredRepresentation::StateVector,
                v.iter().map(|z| [z.re, z.im]).collect(),
            ),
            Representation::DensityMatrix(m) => {
                let dim = m.nrows();
                let mut e = Vec::with_capacity(dim * dim);
                for r in 0..dim {
                    for col in 0..dim {
                        let z = m[(r, col)];
                        e.push([z.re, z.im]);
                    }
                }
                (StoredRepresentation::DensityMatrix, e)
            }
        };
        DenseStateFile {
            n_qubits: s.n_qubits,
            representation,
            entries,
        }
    }

    pub fn into_state(self) -> Result<DenseState> {
        let dim = 1usize
            .checked_shl(self.n_qubits as u32)
            .ok_or_else(|| Error::InvalidArgument("qubit count too large".into()))?;
        let values: Vec<Complex64> = self.entries.iter().map(|[re, im]| c(*re, *im)).collect();
        match self.representation {
            StoredRepresentation::StateVector => {
                if values.len() != dim {
                    return Err(Error::InvalidArgument(format!(
                        "expected {dim} amplitudes, found {}",
                        values.len()
                    )));
                }
                DenseState::from_vector(DVector::from_vec(values))
            }
            StoredRepresentation::DensityMatrix => {
                if values.len() != dim * dim {
                    return Err(Error::InvalidArgument(format!(
                        "expected {} entries, found {}",
                        dim * dim,
                        values.len()
                    )));
                }
                DenseState::from_density(DMatrix::from_row_slice(dim, dim, &values))
            }
        }
    }
}

/// Evolve under `H` exactly: `e^{−iHt}` (unitary) or `e^{−τH}` followed by renormalization.
pub fn exact_evolve(h: &HamiltonianSpec, state: &DenseState, time: TimeParameter) -> Result<DenseState> {
    Error::check_dims(h.n_qubits(), state.n_qubits())?;
    if time.value() == 0.0 {
        return Ok(state.clone());
    }
    let hm = sum_to_matrix(&h.to_sum())?;
    let u = hermitian_exp(&hm, time.generator());
    let repr = state.transformed(&u);
    match time.kind() {
        TimeKind::Real => Ok(DenseState {
            n_qubits: state.n_qubits,
            repr,
        }),
        TimeKind::Imaginary => DenseState::renormalized(state.n_qubits, repr),
    }
}

/// `tr(Q ρ)` for a single string, without forming the operator matrix.
pub fn pauli_expectation(p: &PauliString, state: &DenseState) -> Result<Complex64> {
    Error::check_dims(p.n_qubits(), state.n_qubits())?;
    if p.is_identity() {
        return Ok(c(state.trace_norm(), 0.0));
    }
    let masks = dense_masks(p);
    let mut acc = Complex64::default();
    match &state.repr {
        Representation::StateVector(v) => {
            for (b, amp) in v.iter().enumerate() {
                if *amp == Complex64::default() {
                    continue;
                }
                let (b2, phase) = masks.apply(b);
                acc += v[b2].conj() * phase * amp;
            }
        }
        Representation::DensityMatrix(m) => {
            for b in 0..m.nrows() {
                let (b2, phase) = masks.apply(b);
                acc += phase * m[(b, b2)];
            }
        }
    }
    Ok(acc)
}

/// `Σ γ_i tr(Q_i ρ)`, evaluated termwise.
pub fn exact_expectation(s: &PauliSum, state: &DenseState) -> Result<Complex64> {
    Error::check_dims(s.n_qubits(), state.n_qubits())?;
    let mut acc = Complex64::default();
    for (p, coeff) in s.iter() {
        acc += coeff * pauli_expectation(p, state)?;
    }
    Ok(acc)
}

/// One ±1 outcome of measuring `q`, with mean `tr(qρ)`.
pub fn sample_pauli_measurement(state: &DenseState, q: &PauliString, rng: &mut dyn RngCore) -> Result<i8> {
    if q.is_identity() {
        return Ok(1);
    }
    let mean = pauli_expectation(q, state)?.re;
    Ok(outcome_from_mean(mean, rng))
}

pub(crate) fn outcome_from_mean(mean: f64, rng: &mut dyn RngCore) -> i8 {
    let p_plus = (0.5 * (1.0 + mean)).clamp(0.0, 1.0);
    if rng.random::<f64>() < p_plus {
        1
    } else {
        -1
    }
}

fn apply_single_qubit(amps: &mut [Complex64], n: usize, qubit: usize, g: &[[Complex64; 2]; 2]) {
    let bit = 1usize << (n - 1 - qubit);
    for b in 0..amps.len() {
        if b & bit == 0 {
            let (a0, a1) = (amps[b], amps[b | bit]);
            amps[b] = g[0][0] * a0 + g[0][1] * a1;
            amps[b | bit] = g[1][0] * a0 + g[1][1] * a1;
        }
    }
}

/// Rotation taking the +1 eigenstate of the basis letter to |0⟩.
fn basis_rotation(b: Basis) -> [[Complex64; 2]; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match b {
        Basis::Z => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
        Basis::X => [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]],
        // H · S†
        Basis::Y => [[c(s, 0.0), c(0.0, -s)], [c(s, 0.0), c(0.0, s)]],
    }
}

/// Outcome probabilities (indexed by basis-state index) after measuring each
/// qubit in the given local basis.
pub fn basis_distribution(state: &DenseState, bases: &[Basis]) -> Result<Vec<f64>> {
    let n = state.n_qubits;
    Error::check_dims(bases.len(), n)?;
    match &state.repr {
        Representation::StateVector(v) => {
            let mut amps: Vec<Complex64> = v.iter().copied().collect();
            for (q, b) in bases.iter().enumerate() {
                if *b != Basis::Z {
                    apply_single_qubit(&mut amps, n, q, &basis_rotation(*b));
                }
            }
            Ok(amps.iter().map(|a| a.norm_sqr()).collect())
        }
        Representation::DensityMatrix(m) => {
            let dim = m.nrows();
            let mut rho = m.clone();
            for (q, b) in bases.iter().enumerate() {
                if *b == Basis::Z {
                    continue;
                }
                let g = basis_rotation(*b);
                let gc = [[g[0][0].conj(), g[0][1].conj()], [g[1][0].conj(), g[1][1].conj()]];
                for col in 0..dim {
                    let mut column: Vec<Complex64> = rho.column(col).iter().copied().collect();
                    apply_single_qubit(&mut column, n, q, &g);
                    for (r, z) in column.into_iter().enumerate() {
                        rho[(r, col)] = z;
                    }
                }
                for r in 0..dim {
                    let mut row: Vec<Complex64> = rho.row(r).iter().copied().collect();
                    apply_single_qubit(&mut row, n, q, &gc);
                    for (col, z) in row.into_iter().enumerate() {
                        rho[(r, col)] = z;
                    }
                }
            }
            Ok((0..dim).map(|i| rho[(i, i)].re.max(0.0)).collect())
        }
    }
}

/// Cumulative outcome distributions per basis configuration.
pub type ShadowCache = RwLock<HashMap<Vec<Basis>, Arc<Vec<f64>>>>;

/// `count` local-Pauli shadow snapshots: uniform random basis per qubit, outcome
/// drawn from the rotated computational-basis distribution.
pub fn generate_shadows(state: &DenseState, count: usize, rng: &mut dyn RngCore) -> Result<Vec<ShadowSnapshot>> {
    generate_shadows_cached(state, count, rng, &ShadowCache::default())
}

pub fn generate_shadows_cached(
    state: &DenseState,
    count: usize,
    rng: &mut dyn RngCore,
    cache: &ShadowCache,
) -> Result<Vec<ShadowSnapshot>> {
    let n = state.n_qubits;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let bases: Vec<Basis> = (0..n)
            .map(|_| match rng.random_range(0..3u8) {
                0 => Basis::X,
                1 => Basis::Y,
                _ => Basis::Z,
            })
            .collect();
        let cached = cache.read().expect("shadow cache poisoned").get(&bases).cloned();
        let cumulative = match cached {
            Some(c) => c,
            None => {
                let mut acc = 0.0;
                let c: Vec<f64> = basis_distribution(state, &bases)?
                    .into_iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                let c = Arc::new(c);
                cache.write().expect("shadow cache poisoned").insert(bases.clone(), c.clone());
                c
            }
        };
        let total = *cumulative.last().expect("non-empty distribution");
        let u = rng.random::<f64>() * total;
        let index = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        let bits: Vec<bool> = (0..n).map(|q| (index >> (n - 1 - q)) & 1 == 1).collect();
        out.push(ShadowSnapshot::new(bases, bits));
    }
    Ok(out)
}
