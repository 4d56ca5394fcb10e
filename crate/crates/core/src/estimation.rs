//! Estimators for `Σ γ_i tr(Q_i ρ)` from Pauli measurements or local shadows.
//!
//! Randomness: every estimate is driven by ChaCha8 seeded with `seed_from_u64(seed)`.
//! Shots are cut into blocks of [`EstimationConfig::block_size`]; block `b` uses
//! stream `b` (imaginary parts use stream `IMAG_STREAM_BASE + b`). Blocks are merged
//! in index order with exact integer sums, so reports do not depend on how many
//! threads ran the blocks.

use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::shadow_per_term_error;
use crate::error::{Error, Result};
use crate::expansion::{propagator_result, Expander, ExpansionResult, TimeParameter};
use crate::model::HamiltonianSpec;
use crate::pauli::{PauliLetter, PauliString, PauliSum};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_BLOCK_SIZE: u64 = 4096;
const IMAG_STREAM_BASE: u64 = 1 << 40;

/// Single-qubit measurement basis of a shadow snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Basis {
    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'X' => Ok(Basis::X),
            'Y' => Ok(Basis::Y),
            'Z' => Ok(Basis::Z),
            other => Err(Error::InvalidPauliChar(other)),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Basis::X => 'X',
            Basis::Y => 'Y',
            Basis::Z => 'Z',
        }
    }

    fn matches(self, l: PauliLetter) -> bool {
        matches!(
            (self, l),
            (Basis::X, PauliLetter::X) | (Basis::Y, PauliLetter::Y) | (Basis::Z, PauliLetter::Z)
        )
    }
}

/// Per-qubit bases and outcomes of one randomized measurement. Bit `false` is
/// the +1 eigenvalue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShadowRecord", into = "ShadowRecord")]
pub struct ShadowSnapshot {
    bases: Vec<Basis>,
    bits: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct ShadowRecord {
    bases: String,
    bits: String,
}

impl TryFrom<ShadowRecord> for ShadowSnapshot {
    type Error = Error;

    fn try_from(r: ShadowRecord) -> Result<Self> {
        let bases = r.bases.chars().map(Basis::from_char).collect::<Result<Vec<_>>>()?;
        let bits = r
            .bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidBitChar(other)),
            })
            .collect::<Result<Vec<_>>>()?;
        Error::check_dims(bases.len(), bits.len())?;
        Ok(ShadowSnapshot { bases, bits })
    }
}

impl From<ShadowSnapshot> for ShadowRecord {
    fn from(s: ShadowSnapshot) -> Self {
        ShadowRecord {
            bases: s.bases.iter().map(|b| b.as_char()).collect(),
            bits: s.bits.iter().map(|&b| if b { '1' } else { '0' }).collect(),
        }
    }
}

impl ShadowSnapshot {
    /// Panics if the lengths differ; use [`ShadowSnapshot::parse`] for untrusted input.
    pub fn new(bases: Vec<Basis>, bits: Vec<bool>) -> Self {
        assert_eq!(bases.len(), bits.len(), "bases and bits must have equal length");
        ShadowSnapshot { bases, bits }
    }

    pub fn parse(bases: &str, bits: &str) -> Result<Self> {
        ShadowRecord {
            bases: bases.into(),
            bits: bits.into(),
        }
        .try_into()
    }

    pub fn n_qubits(&self) -> usize {
        self.bases.len()
    }

    pub fn bases(&self) -> &[Basis] {
        &self.bases
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// `3^{w(q)} Π_{j ∈ supp q} [basis_j = q_j] (−1)^{bit_j}`.
    pub fn estimator(&self, q: &PauliString) -> Result<f64> {
        Error::check_dims(q.n_qubits(), self.n_qubits())?;
        let mut value = 1.0;
        for j in q.support() {
            if !self.bases[j].matches(q.letter(j)) {
                return Ok(0.0);
            }
            value *= if self.bits[j] { -3.0 } else { 3.0 };
        }
        Ok(value)
    }
}

pub fn read_shadows_jsonl(reader: impl BufRead) -> Result<Vec<ShadowSnapshot>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let snap: ShadowSnapshot = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = out.first().map(ShadowSnapshot::n_qubits) {
            if snap.n_qubits() != first {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("snapshot has {} qubits, expected {first}", snap.n_qubits()),
                });
            }
        }
        out.push(snap);
    }
    Ok(out)
}

pub fn load_shadows(path: &Path) -> Result<Vec<ShadowSnapshot>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_shadows_jsonl(std::io::BufReader::new(file))
}

pub fn write_shadows_jsonl(snaps: &[ShadowSnapshot], mut writer: impl Write) -> Result<()> {
    for s in snaps {
        let line = serde_json::to_string(s).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Access to measurements on a fixed state `ρ`.
pub trait MeasurementSource: Sync {
    fn n_qubits(&self) -> usize;

    /// One ±1 outcome with mean `tr(qρ)`. The identity always yields +1.
    fn sample_pauli(&self, q: &PauliString, rng: &mut dyn RngCore) -> Result<i8>;

    fn draw_shadows(&self, count: usize, rng: &mut dyn RngCore) -> Result<Vec<ShadowSnapshot>>;

    /// Whether blocks may be sampled from several threads at once.
    fn supports_concurrent(&self) -> bool {
        true
    }

    /// Noise-free `tr(qρ)`, for sources that can provide it.
    fn exact_pauli(&self, _q: &PauliString) -> Option<Result<Complex64>> {
        None
    }
}

/// Replays recorded snapshots. Pauli sampling is unavailable.
#[derive(Debug, Clone)]
pub struct RecordedShadows {
    snaps: Vec<ShadowSnapshot>,
}

impl RecordedShadows {
    pub fn new(snaps: Vec<ShadowSnapshot>) -> Result<Self> {
        let n = snaps.first().ok_or_else(|| Error::Source("no recorded snapshots".into()))?.n_qubits();
        for s in &snaps {
            Error::check_dims(s.n_qubits(), n)?;
        }
        Ok(RecordedShadows { snaps })
    }

    pub fn snapshots(&self) -> &[ShadowSnapshot] {
        &self.snaps
    }
}

impl MeasurementSource for RecordedShadows {
    fn n_qubits(&self) -> usize {
        self.snaps[0].n_qubits()
    }

    fn sample_pauli(&self, _q: &PauliString, _rng: &mut dyn RngCore) -> Result<i8> {
        Err(Error::Source("recorded shadows cannot answer Pauli measurements".into()))
    }

    fn draw_shadows(&self, count: usize, _rng: &mut dyn RngCore) -> Result<Vec<ShadowSnapshot>> {
        if count > self.snaps.len() {
            return Err(Error::Source(format!(
                "requested {count} snapshots, only {} recorded",
                self.snaps.len()
            )));
        }
        Ok(self.snaps[..count].to_vec())
    }

    fn supports_concurrent(&self) -> bool {
        false
    }
}

/// `p_i = |γ_i|/‖γ‖₁` over sign-carrying strings.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    probabilities: Vec<f64>,
    strings: Vec<PauliString>,
    signs: Vec<i8>,
    gamma_l1: f64,
    cumulative: Vec<f64>,
}

impl SamplingDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn strings(&self) -> &[PauliString] {
        &self.strings
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn gamma_l1(&self) -> f64 {
        self.gamma_l1
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> usize {
        let u = rng.random::<f64>();
        self.cumulative.partition_point(|&c| c <= u).min(self.strings.len() - 1)
    }
}

pub fn build_sampling_distribution(s: &PauliSum) -> Result<SamplingDistribution> {
    if s.is_empty() {
        return Err(Error::EmptySum);
    }
    let tol = s.tolerance();
    let mut strings = Vec::with_capacity(s.len());
    let mut weights = Vec::with_capacity(s.len());
    let mut signs = Vec::with_capacity(s.len());
    for (p, c) in s.iter() {
        if c.im.abs() > tol {
            return Err(Error::ComplexCoefficient {
                pauli: p.to_string(),
                imag: c.im,
            });
        }
        if c.re == 0.0 {
            continue;
        }
        strings.push(p.clone());
        weights.push(c.re.abs());
        signs.push(if c.re < 0.0 { -1 } else { 1 });
    }
    if strings.is_empty() {
        return Err(Error::EmptySum);
    }
    let gamma_l1: f64 = weights.iter().sum();
    let probabilities: Vec<f64> = weights.iter().map(|w| w / gamma_l1).collect();
    let mut cumulative = Vec::with_capacity(probabilities.len());
    let mut acc = 0.0;
    for p in &probabilities {
        acc += p;
        cumulative.push(acc);
    }
    *cumulative.last_mut().expect("nonempty") = 1.0;
    Ok(SamplingDistribution {
        probabilities,
        strings,
        signs,
        gamma_l1,
        cumulative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Importance,
    #[serde(alias = "shadows")]
    Shadow,
    Exact,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "importance" => Ok(Method::Importance),
            "shadow" | "shadows" => Ok(Method::Shadow),
            "exact" => Ok(Method::Exact),
            other => Err(Error::InvalidArgument(format!(
                "unknown backend {other:?} (expected exact, importance or shadows)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate: Complex64,
    /// `|estimate − truth| ≤ radius` with probability at least `confidence_level`.
    pub confidence_radius: f64,
    pub confidence_level: f64,
    pub shots_used: u64,
    pub method: Method,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub delta: f64,
    pub block_size: u64,
    /// Add the identity coefficient analytically instead of sampling it.
    pub separate_identity: bool,
    /// Median of means over this many groups for shadow estimates.
    pub median_of_means: Option<usize>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            delta: DEFAULT_DELTA,
            block_size: DEFAULT_BLOCK_SIZE,
            separate_identity: false,
            median_of_means: None,
        }
    }
}

impl EstimationConfig {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidArgument("block size must be >= 1".into()));
        }
        if self.median_of_means == Some(0) {
            return Err(Error::InvalidArgument("median-of-means needs at least one group".into()));
        }
        Ok(())
    }
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run `f(block_index, count)` over all blocks, in parallel when allowed, and
/// return the per-block results in block order.
fn run_blocks<T: Send>(
    shots: u64,
    block_size: u64,
    concurrent: bool,
    f: impl Fn(u64, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let n_blocks = shots.div_ceil(block_size);
    let count = |b: u64| block_size.min(shots - b * block_size);
    if concurrent {
        (0..n_blocks).into_par_iter().map(|b| f(b, count(b))).collect()
    } else {
        (0..n_blocks).map(|b| f(b, count(b))).collect()
    }
}

/// Real-coefficient importance sampling. Returns `(estimate, radius)`.
fn importance_real(
    s: &PauliSum,
    src: &dyn MeasurementSource,
    shots: u64,
    seed: u64,
    stream_base: u64,
    delta: f64,
    cfg: &EstimationConfig,
) -> Result<(f64, f64)> {
    let (offset, sampled) = if cfg.separate_identity {
        let id = PauliString::identity(s.n_qubits());
        let mut rest = PauliSum::new(s.n_qubits());
        for (p, c) in s.iter().filter(|(p, _)| **p != id) {
            rest.add_term(*c, p.clone())?;
        }
        (s.identity_coefficient().re, rest)
    } else {
        (0.0, s.clone())
    };
    if sampled.is_empty() {
        return Ok((offset, 0.0));
    }
    let dist = build_sampling_distribution(&sampled)?;
    let sums = run_blocks(shots, cfg.block_size, src.supports_concurrent(), |b, count| {
        let mut rng = block_rng(seed, stream_base + b);
        let mut acc: i64 = 0;
        for _ in 0..count {
            let i = dist.sample(&mut rng);
            let outcome = src.sample_pauli(&dist.strings[i], &mut rng)?;
            acc += (dist.signs[i] * outcome) as i64;
        }
        Ok(acc)
    })?;
    let total: i64 = sums.iter().sum();
    let n = shots as f64;
    let estimate = offset + dist.gamma_l1 * total as f64 / n;
    let radius = dist.gamma_l1 * (2.0 * (2.0 / delta).ln() / n).sqrt();
    Ok((estimate, radius))
}

/// Importance-sampling estimate of `Σ γ_i tr(Q_iρ)`: draw `i ~ |γ_i|/‖γ‖₁`, measure
/// `sign(γ_i) Q_i`, average `‖γ‖₁ · sign · outcome`. Radius `‖γ‖₁ √(2 ln(2/δ)/N)`.
///
/// Coefficients must be real; see [`importance_estimate_complex`].
pub fn importance_estimate(
    s: &PauliSum,
    src: &dyn MeasurementSource,
    shots: u64,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<EstimateReport> {
    cfg.validate()?;
    check_source(s, src, shots)?;
    build_sampling_distribution(s)?;
    let (estimate, radius) = importance_real(s, src, shots, seed, 0, cfg.delta, cfg)?;
    Ok(EstimateReport {
        estimate: Complex64::new(estimate, 0.0),
        confidence_radius: radius,
        confidence_level: 1.0 - cfg.delta,
        shots_used: shots,
        method: Method::Importance,
        seed,
    })
}

/// Complex sums as two real problems, each at confidence `1 − δ/2` with `shots`
/// draws; the combined radius is `√(r_re² + r_im²)`.
pub fn importance_estimate_complex(
    s: &PauliSum,
    src: &dyn MeasurementSource,
    shots: u64,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<EstimateReport> {
    cfg.validate()?;
    check_source(s, src, shots)?;
    if s.is_empty() {
        return Err(Error::EmptySum);
    }
    let half = cfg.delta / 2.0;
    let part = |sum: PauliSum, base: u64| -> Result<(f64, f64, u64)> {
        if sum.is_empty() {
            Ok((0.0, 0.0, 0))
        } else {
            let (e, r) = importance_real(&sum, src, shots, seed, base, half, cfg)?;
            Ok((e, r, shots))
        }
    };
    let (re, r_re, n_re) = part(s.real_part(), 0)?;
    let (im, r_im, n_im) = part(s.imag_part(), IMAG_STREAM_BASE)?;
    Ok(EstimateReport {
        estimate: Complex64::new(re, im),
        confidence_radius: r_re.hypot(r_im),
        confidence_level: 1.0 - cfg.delta,
        shots_used: n_re + n_im,
        method: Method::Importance,
        seed,
    })
}

fn check_source(s: &PauliSum, src: &dyn MeasurementSource, shots: u64) -> Result<()> {
    Error::check_dims(s.n_qubits(), src.n_qubits())?;
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be >= 1".into()));
    }
    Ok(())
}

/// Mean single-snapshot estimator of `tr(qρ)`.
pub fn shadow_estimate_pauli(snaps: &[ShadowSnapshot], q: &PauliString) -> Result<f64> {
    if snaps.is_empty() {
        return Err(Error::Source("no shadow snapshots".into()));
    }
    let mut acc = 0.0;
    for s in snaps {
        acc += s.estimator(q)?;
    }
    Ok(acc / snaps.len() as f64)
}

/// Median over `groups` contiguous groups of the per-group means.
pub fn shadow_estimate_pauli_mom(snaps: &[ShadowSnapshot], q: &PauliString, groups: usize) -> Result<f64> {
    if groups == 0 || groups > snaps.len() {
        return Err(Error::InvalidArgument(format!(
            "median-of-means needs 1..={} groups, got {groups}",
            snaps.len()
        )));
    }
    let size = snaps.len() / groups;
    let mut means = (0..groups)
        .map(|g| {
            let end = if g + 1 == groups { snaps.len() } else { (g + 1) * size };
            shadow_estimate_pauli(&snaps[g * size..end], q)
        })
        .collect::<Result<Vec<f64>>>()?;
    means.sort_by(f64::total_cmp);
    let mid = groups / 2;
    Ok(if groups % 2 == 1 {
        means[mid]
    } else {
        0.5 * (means[mid - 1] + means[mid])
    })
}

/// Per-term radius holding simultaneously for `m` terms of weight ≤ `w`.
fn shadow_term_radius(w: usize, m: usize, n: usize, delta: f64, groups: Option<usize>) -> f64 {
    let scale = 3f64.powi(w as i32);
    let nf = n as f64;
    match groups {
        None => {
            // Hoeffding on single-snapshot values in [−3^w, 3^w], union over m.
            let hoeffding = scale * (2.0 * (2.0 * m as f64 / delta).ln() / nf).sqrt();
            match shadow_per_term_error(w, m, n as u64, delta) {
                Some(e) => e.min(hoeffding),
                None => hoeffding,
            }
        }
        Some(k) => {
            let kf = k as f64;
            let per_group = (nf / kf).floor();
            // Every group mean inside its Hoeffding radius (union over m·k) puts the median there too.
            let all_groups = scale * (2.0 * (2.0 * m as f64 * kf / delta).ln() / per_group).sqrt();
            // Chebyshev at 2σ per group plus a binomial tail on the median.
            if kf >= 8.0 * (m as f64 / delta).ln() {
                (2.0 * (scale * kf / nf).sqrt()).min(all_groups)
            } else {
                all_groups
            }
        }
    }
}

/// `Σ γ_i · shadow_estimate_pauli(snaps, Q_i)` for complex `γ`. The radius is
/// `ε_term · Σ_{Q_i ≠ I} |γ_i|` with `ε_term` the per-term bound for this many
/// snapshots at failure probability `δ`.
pub fn shadow_estimate_sum(
    snaps: &[ShadowSnapshot],
    s: &PauliSum,
    delta: f64,
    cfg: &EstimationConfig,
) -> Result<EstimateReport> {
    if s.is_empty() {
        return Err(Error::EmptySum);
    }
    if snaps.is_empty() {
        return Err(Error::Source("no shadow snapshots".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let terms: Vec<(&PauliString, &Complex64)> = s.iter().collect();
    let values = terms
        .par_iter()
        .map(|(p, _)| match cfg.median_of_means {
            Some(k) => shadow_estimate_pauli_mom(snaps, p, k),
            None => shadow_estimate_pauli(snaps, p),
        })
        .collect::<Result<Vec<f64>>>()?;
    let estimate: Complex64 = terms.iter().zip(&values).map(|((_, c), v)| **c * *v).sum();
    let non_identity: Vec<&Complex64> = terms.iter().filter(|(p, _)| !p.is_identity()).map(|(_, c)| *c).collect();
    let radius = if non_identity.is_empty() {
        0.0
    } else {
        let l1: f64 = non_identity.iter().map(|c| c.norm()).sum();
        let w = s.max_weight();
        l1 * shadow_term_radius(w, non_identity.len(), snaps.len(), delta, cfg.median_of_means)
    };
    Ok(EstimateReport {
        estimate,
        confidence_radius: radius,
        confidence_level: 1.0 - delta,
        shots_used: snaps.len() as u64,
        method: Method::Shadow,
        seed: 0,
    })
}

/// Draw `count` snapshots in seeded blocks, concatenated in block order.
pub fn draw_shadows_seeded(
    src: &dyn MeasurementSource,
    count: u64,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<Vec<ShadowSnapshot>> {
    cfg.validate()?;
    let blocks = run_blocks(count, cfg.block_size, src.supports_concurrent(), |b, n| {
        src.draw_shadows(n as usize, &mut block_rng(seed, b))
    })?;
    Ok(blocks.into_iter().flatten().collect())
}

/// `Σ γ_i tr(Q_iρ)` from the source's noise-free expectations.
pub fn exact_estimate(s: &PauliSum, src: &dyn MeasurementSource) -> Result<EstimateReport> {
    Error::check_dims(s.n_qubits(), src.n_qubits())?;
    let mut acc = Complex64::default();
    for (p, c) in s.iter() {
        let v = src
            .exact_pauli(p)
            .ok_or_else(|| Error::Source("source has no exact expectations".into()))??;
        acc += c * v;
    }
    Ok(EstimateReport {
        estimate: acc,
        confidence_radius: 0.0,
        confidence_level: 1.0,
        shots_used: 0,
        method: Method::Exact,
        seed: 0,
    })
}

/// Dispatch on the backend. Importance sampling splits complex sums; shadows
/// draw `shots` fresh snapshots from the source.
pub fn estimate_sum(
    s: &PauliSum,
    src: &dyn MeasurementSource,
    method: Method,
    shots: u64,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<EstimateReport> {
    match method {
        Method::Exact => exact_estimate(s, src),
        Method::Importance => {
            if s.max_imag() > s.tolerance() {
                importance_estimate_complex(s, src, shots, seed, cfg)
            } else {
                importance_estimate(s, src, shots, seed, cfg)
            }
        }
        Method::Shadow => {
            check_source(s, src, shots)?;
            let snaps = draw_shadows_seeded(src, shots, seed, cfg)?;
            let mut report = shadow_estimate_sum(&snaps, s, cfg.delta, cfg)?;
            report.seed = seed;
            Ok(report)
        }
    }
}

/// `tr(ρ Ũ(t))` with `Ũ` the `r`-segment propagator expansion.
#[allow(clippy::too_many_arguments)]
pub fn loschmidt_estimate(
    h: &HamiltonianSpec,
    time: TimeParameter,
    order: usize,
    segments: usize,
    src: &dyn MeasurementSource,
    method: Method,
    shots: u64,
    seed: u64,
    cfg: &EstimationConfig,
    expander: &Expander,
) -> Result<(ExpansionResult, EstimateReport)> {
    let expansion = propagator_result(h, time, order, segments, expander)?;
    let report = estimate_sum(&expansion.sum, src, method, shots, seed, cfg)?;
    Ok((expansion, report))
}

/// Loschmidt estimate from previously recorded snapshots.
pub fn loschmidt_from_shadows(
    h: &HamiltonianSpec,
    time: TimeParameter,
    order: usize,
    segments: usize,
    snaps: &[ShadowSnapshot],
    cfg: &EstimationConfig,
    expander: &Expander,
) -> Result<(ExpansionResult, EstimateReport)> {
    let expansion = propagator_result(h, time, order, segments, expander)?;
    let report = shadow_estimate_sum(snaps, &expansion.sum, cfg.delta, cfg)?;
    Ok((expansion, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    /// Product state with fixed single-qubit Bloch vectors along Z (±1) only.
    struct ZEigen {
        bits: Vec<bool>,
    }

    impl MeasurementSource for ZEigen {
        fn n_qubits(&self) -> usize {
            self.bits.len()
        }

        fn sample_pauli(&self, q: &PauliString, rng: &mut dyn RngCore) -> Result<i8> {
            if q.letters().any(|l| matches!(l, PauliLetter::X | PauliLetter::Y)) {
                return Ok(if rng.random::<bool>() { 1 } else { -1 });
            }
            let flips = q.support().filter(|&j| self.bits[j]).count();
            Ok(if flips % 2 == 0 { 1 } else { -1 })
        }

        fn draw_shadows(&self, count: usize, rng: &mut dyn RngCore) -> Result<Vec<ShadowSnapshot>> {
            let n = self.bits.len();
            Ok((0..count)
                .map(|_| {
                    let bases: Vec<Basis> = (0..n)
                        .map(|_| [Basis::X, Basis::Y, Basis::Z][rng.random_range(0..3)])
                        .collect();
                    let bits = bases
                        .iter()
                        .zip(&self.bits)
                        .map(|(b, &z)| if *b == Basis::Z { z } else { rng.random() })
                        .collect();
                    ShadowSnapshot::new(bases, bits)
                })
                .collect())
        }
    }

    #[test]
    fn distribution_examples() {
        let d = build_sampling_distribution(&PauliSum::from_real_terms(&[(0.99, "Z"), (0.2, "Y")]).unwrap()).unwrap();
        // Strings are ordered Y < Z internally.
        let pz = d.probabilities()[d.strings().iter().position(|s| *s == p("Z")).unwrap()];
        let py = d.probabilities()[d.strings().iter().position(|s| *s == p("Y")).unwrap()];
        assert!((pz - 0.99 / 1.19).abs() < 1e-15 && (pz - 0.8319).abs() < 1e-4);
        assert!((py - 0.1681).abs() < 1e-4);
        assert!(d.signs().iter().all(|&s| s == 1));
        let d = build_sampling_distribution(&PauliSum::from_real_terms(&[(-0.5, "X")]).unwrap()).unwrap();
        assert_eq!(d.probabilities(), &[1.0]);
        assert_eq!(d.signs(), &[-1]);
        assert_eq!(build_sampling_distribution(&PauliSum::new(1)), Err(Error::EmptySum));
        let complex = PauliSum::from_term(Complex64::new(0.0, 1.0), p("X"));
        assert!(matches!(build_sampling_distribution(&complex), Err(Error::ComplexCoefficient { .. })));
    }

    #[test]
    fn identity_has_zero_variance() {
        let src = ZEigen { bits: vec![false] };
        let s = PauliSum::from_real_terms(&[(0.7, "I")]).unwrap();
        let r = importance_estimate(&s, &src, 100, 1, &EstimationConfig::default()).unwrap();
        assert!((r.estimate.re - 0.7).abs() < 1e-15);
    }

    #[test]
    fn importance_is_deterministic_and_unbiased() {
        let src = ZEigen { bits: vec![false] };
        let s = PauliSum::from_real_terms(&[(0.99, "Z"), (0.2, "Y")]).unwrap();
        let cfg = EstimationConfig::default();
        let a = importance_estimate(&s, &src, 100_000, 42, &cfg).unwrap();
        let b = importance_estimate(&s, &src, 100_000, 42, &cfg).unwrap();
        assert_eq!(a, b);
        // Single-draw values are ±1.19, so σ ≤ 1.19/√N.
        assert!((a.estimate.re - 0.99).abs() < 4.0 * 1.19 / (1e5f64).sqrt());
        let small = EstimationConfig {
            block_size: 7,
            ..cfg.clone()
        };
        let c = importance_estimate(&s, &src, 1000, 3, &small).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let d = pool.install(|| importance_estimate(&s, &src, 1000, 3, &small).unwrap());
        assert_eq!(c, d);
    }

    #[test]
    fn separated_identity() {
        let src = ZEigen { bits: vec![true] };
        let s = PauliSum::from_real_terms(&[(0.5, "I"), (0.25, "Z")]).unwrap();
        let cfg = EstimationConfig {
            separate_identity: true,
            ..Default::default()
        };
        let r = importance_estimate(&s, &src, 10, 0, &cfg).unwrap();
        assert_eq!(r.estimate.re, 0.25);
        assert!((r.confidence_radius - 0.25 * (2.0 * 40f64.ln() / 10.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn shadow_single_snapshot_examples() {
        let snap = ShadowSnapshot::parse("ZZ", "01").unwrap();
        assert_eq!(snap.estimator(&p("ZZ")).unwrap(), -9.0);
        assert_eq!(ShadowSnapshot::parse("ZX", "00").unwrap().estimator(&p("ZZ")).unwrap(), 0.0);
        assert_eq!(snap.estimator(&p("II")).unwrap(), 1.0);
        assert!(shadow_estimate_pauli(&[], &p("Z")).is_err());
        assert!(ShadowSnapshot::parse("ZZ", "0").is_err());
    }

    #[test]
    fn shadow_sum_reuses_snapshots() {
        let src = ZEigen { bits: vec![false] };
        let cfg = EstimationConfig::default();
        let snaps = draw_shadows_seeded(&src, 100_000, 11, &cfg).unwrap();
        let s1 = PauliSum::from_real_terms(&[(0.99, "Z"), (0.2, "Y")]).unwrap();
        let r1 = shadow_estimate_sum(&snaps, &s1, 0.05, &cfg).unwrap();
        // Var of the Z estimator on |0⟩ is 3 − 1 = 2, Y is 3.
        let se = (0.99f64.powi(2) * 2.0 + 0.04 * 3.0).sqrt() / (1e5f64).sqrt();
        assert!((r1.estimate.re - 0.99).abs() < 3.0 * se);
        let r2 = shadow_estimate_sum(&snaps, &PauliSum::from_real_terms(&[(0.3, "I")]).unwrap(), 0.05, &cfg).unwrap();
        assert_eq!(r2.estimate.re, 0.3);
        assert_eq!(r2.confidence_radius, 0.0);
        let mom = EstimationConfig {
            median_of_means: Some(10),
            ..cfg
        };
        let r3 = shadow_estimate_sum(&snaps, &s1, 0.05, &mom).unwrap();
        assert!((r3.estimate.re - 0.99).abs() < r3.confidence_radius);
    }

    #[test]
    fn jsonl_round_trip() {
        let snaps = vec![ShadowSnapshot::parse("XZY", "010").unwrap(), ShadowSnapshot::parse("ZZZ", "111").unwrap()];
        let mut buf = Vec::new();
        write_shadows_jsonl(&snaps, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap().lines().next().unwrap(),
            r#"{"bases":"XZY","bits":"010"}"#
        );
        assert_eq!(read_shadows_jsonl(buf.as_slice()).unwrap(), snaps);
        let bad = b"{\"bases\":\"XQ\",\"bits\":\"01\"}\n";
        assert!(matches!(read_shadows_jsonl(&bad[..]), Err(Error::Parse { line: 1, .. })));
    }
}
