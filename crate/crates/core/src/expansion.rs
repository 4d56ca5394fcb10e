//! Truncated-series Pauli expansions of propagators and Heisenberg-evolved observables.
//!
//! Three routes to `O(t) = e^{iHt} O e^{-iHt}` are provided:
//!
//! * [`Expander::heisenberg_taylor_concat`] conjugates `O` with a truncated
//!   propagator `Ũ(t) = (Σ_{k≤K} (−iHt/r)^k/k!)^r`;
//! * [`Expander::heisenberg_direct_expansion`] keeps all `H^k O H^{k'}` with `k + k' ≤ K`;
//! * [`Expander::heisenberg_commutator_series`] sums `(it)^k/k! ad_H^k(O)`, generating
//!   only anticommuting products.
//!
//! Every multiplication level merges duplicate strings before the next one, and a
//! term-count guard aborts expansions whose distinct-term count exceeds the cap.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bounds::{propagator_tail_bound, term_count_bound};
use crate::error::{Error, Result};
use crate::model::{HamiltonianSpec, ObservableSpec};
use crate::pauli::{PauliString, PauliSum, DEFAULT_TOLERANCE};

pub const DEFAULT_TERM_CAP: usize = 10_000_000;
pub const DEFAULT_ORDER_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeKind {
    Real,
    Imaginary,
}

/// Evolution time. Real time generates with `−i t H`, imaginary time with `−τ H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeParameter {
    value: f64,
    kind: TimeKind,
}

impl TimeParameter {
    pub fn new(value: f64, kind: TimeKind) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time must be finite and >= 0, got {value}"
            )));
        }
        Ok(TimeParameter { value, kind })
    }

    pub fn real(t: f64) -> Result<Self> {
        Self::new(t, TimeKind::Real)
    }

    pub fn imaginary(tau: f64) -> Result<Self> {
        Self::new(tau, TimeKind::Imaginary)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn kind(&self) -> TimeKind {
        self.kind
    }

    /// Same kind, value divided by `r`.
    pub fn split(&self, segments: usize) -> Self {
        TimeParameter {
            value: self.value / segments as f64,
            kind: self.kind,
        }
    }

    /// Scalar `g` with propagator `e^{gH}`.
    pub fn generator(&self) -> Complex64 {
        match self.kind {
            TimeKind::Real => Complex64::new(0.0, -self.value),
            TimeKind::Imaginary => Complex64::new(-self.value, 0.0),
        }
    }

    /// Scalar multiplying `H` on the left of `O` in the evolved observable:
    /// `i t` for `e^{iHt} O e^{−iHt}`, `−τ` for `e^{−τH} O e^{−τH}`.
    fn left_generator(&self) -> Complex64 {
        match self.kind {
            TimeKind::Real => Complex64::new(0.0, self.value),
            TimeKind::Imaginary => Complex64::new(-self.value, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionMode {
    Concat,
    Direct,
    Commutator,
    PropagatorOnly,
}

impl std::fmt::Display for ExpansionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExpansionMode::Concat => "concat",
            ExpansionMode::Direct => "direct",
            ExpansionMode::Commutator => "commutator",
            ExpansionMode::PropagatorOnly => "propagator-only",
        })
    }
}

impl std::str::FromStr for ExpansionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(ExpansionMode::Concat),
            "direct" => Ok(ExpansionMode::Direct),
            "commutator" => Ok(ExpansionMode::Commutator),
            "propagator" | "propagator-only" => Ok(ExpansionMode::PropagatorOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?} (concat, direct, commutator, propagator-only)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionStats {
    /// Distinct Pauli strings.
    pub m_tot: usize,
    /// `‖γ‖₁ = Σ|γ_i|`.
    pub gamma_l1: f64,
    /// Largest weight over the strings.
    pub w_max: usize,
    pub identity_coeff: Complex64,
}

impl ExpansionStats {
    pub fn of(sum: &PauliSum) -> Self {
        ExpansionStats {
            m_tot: sum.len(),
            gamma_l1: sum.l1_norm(),
            w_max: sum.max_weight(),
            identity_coeff: sum.identity_coefficient(),
        }
    }
}

pub fn expansion_stats(sum: &PauliSum) -> ExpansionStats {
    ExpansionStats::of(sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionResult {
    pub sum: PauliSum,
    pub order: usize,
    pub segments: usize,
    pub mode: ExpansionMode,
    pub stats: ExpansionStats,
}

impl ExpansionResult {
    fn new(sum: PauliSum, order: usize, segments: usize, mode: ExpansionMode) -> Self {
        ExpansionResult {
            stats: ExpansionStats::of(&sum),
            sum,
            order,
            segments,
            mode,
        }
    }
}

/// Smallest `K` with `Λ^{K+1}/(K+1)! ≤ ε`, scanning up to [`DEFAULT_ORDER_CAP`].
pub fn select_truncation_order(lambda: f64, eps: f64) -> Result<usize> {
    select_truncation_order_capped(lambda, eps, DEFAULT_ORDER_CAP)
}

pub fn select_truncation_order_capped(lambda: f64, eps: f64, cap: usize) -> Result<usize> {
    if !(lambda >= 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "order selection needs Lambda >= 0 and eps > 0, got ({lambda}, {eps})"
        )));
    }
    (0..=cap)
        .find(|&k| propagator_tail_bound(lambda, k) <= eps)
        .ok_or(Error::OrderCapExceeded { cap, lambda, eps })
}

/// Expansion engine with its resource guard and merge tolerance.
#[derive(Debug, Clone, Copy)]
pub struct Expander {
    pub term_cap: usize,
    pub tol: f64,
}

impl Default for Expander {
    fn default() -> Self {
        Expander {
            term_cap: DEFAULT_TERM_CAP,
            tol: DEFAULT_TOLERANCE,
        }
    }
}

impl Expander {
    pub fn with_term_cap(term_cap: usize) -> Self {
        Expander {
            term_cap,
            ..Default::default()
        }
    }

    fn guard(&self, s: &PauliSum, predicted: impl FnOnce() -> u64) -> Result<()> {
        if s.len() > self.term_cap {
            let p = predicted();
            return Err(Error::TermCountExceeded {
                count: s.len(),
                cap: self.term_cap,
                predicted: if p == u64::MAX { "overflow".into() } else { p.to_string() },
            });
        }
        Ok(())
    }

    fn hamiltonian_sum(&self, h: &HamiltonianSpec) -> PauliSum {
        h.to_sum().with_tolerance(self.tol).with_hermitian_hint(false)
    }

    /// `Σ_{k≤K} (gH)^k/k!` with `g` the time generator.
    pub fn expand_propagator(&self, h: &HamiltonianSpec, time: TimeParameter, order: usize) -> Result<PauliSum> {
        let n = h.n_qubits();
        let generator = self.hamiltonian_sum(h).scale(time.generator());
        let mut term = PauliSum::identity(n).with_tolerance(self.tol);
        let mut acc = term.clone();
        for k in 1..=order {
            term = term
                .multiply(&generator)?
                .scale(Complex64::new(1.0 / k as f64, 0.0));
            acc.add_assign(&term)?;
            self.guard(&acc, || term_count_bound(h.n_terms(), order, 1, false))?;
            if term.is_empty() {
                break;
            }
        }
        Ok(acc)
    }

    /// `u† O u`, canonicalized as a Hermitian sum.
    pub fn conjugate_expansion(&self, u: &PauliSum, obs: &ObservableSpec) -> Result<PauliSum> {
        Error::check_dims(u.n_qubits(), obs.n_qubits())?;
        let o = obs.observable().clone().with_tolerance(self.tol);
        let left = u.adjoint().multiply(&o)?;
        self.guard(&left, || u.len() as u64 * o.len() as u64)?;
        let out = left.multiply(u)?;
        self.guard(&out, || (u.len() as u64).saturating_pow(2).saturating_mul(o.len() as u64))?;
        out.with_hermitian_hint(true).canonicalize(self.tol)
    }

    /// `Ũ(t)† O Ũ(t)` with `Ũ(t) = Ũ(t/r)^r` and each factor truncated at order `K`.
    pub fn heisenberg_taylor_concat(
        &self,
        h: &HamiltonianSpec,
        obs: &ObservableSpec,
        time: TimeParameter,
        order: usize,
        segments: usize,
    ) -> Result<ExpansionResult> {
        Error::check_dims(h.n_qubits(), obs.n_qubits())?;
        if segments == 0 {
            return Err(Error::InvalidArgument("segment count r must be >= 1".into()));
        }
        let segment = self.expand_propagator(h, time.split(segments), order)?;
        let mut total = segment.clone();
        for _ in 1..segments {
            total = total.multiply(&segment)?;
            self.guard(&total, || term_count_bound(h.n_terms(), order, segments, false))?;
        }
        let sum = self.conjugate_expansion(&total, obs).map_err(|e| match e {
            Error::TermCountExceeded { count, cap, .. } => Error::TermCountExceeded {
                count,
                cap,
                predicted: term_count_bound(h.n_terms(), order, segments, true).to_string(),
            },
            other => other,
        })?;
        Ok(ExpansionResult::new(sum, order, segments, ExpansionMode::Concat))
    }

    /// `Σ_{k≤K} c^k/k! ad_H^k(O)` with `c = it` for real time.
    ///
    /// For imaginary time `c = τ`, which yields the analytic continuation
    /// `e^{τH} O e^{−τH}`; that operator is not Hermitian, so the result keeps
    /// complex coefficients.
    pub fn heisenberg_commutator_series(
        &self,
        h: &HamiltonianSpec,
        obs: &ObservableSpec,
        time: TimeParameter,
        order: usize,
    ) -> Result<ExpansionResult> {
        Error::check_dims(h.n_qubits(), obs.n_qubits())?;
        let hs = self.hamiltonian_sum(h);
        let c = match time.kind() {
            TimeKind::Real => Complex64::new(0.0, time.value()),
            TimeKind::Imaginary => Complex64::new(time.value(), 0.0),
        };
        let mut term = obs.observable().clone().with_tolerance(self.tol).with_hermitian_hint(false);
        let mut acc = term.clone();
        for k in 1..=order {
            term = hs.commutator(&term)?.scale(c / k as f64);
            acc.add_assign(&term)?;
            self.guard(&acc, || {
                term_count_bound(h.n_terms(), order, 1, false).saturating_mul(obs.observable().len() as u64)
            })?;
            if term.is_empty() {
                break;
            }
        }
        let sum = match time.kind() {
            TimeKind::Real => acc.with_hermitian_hint(true).canonicalize(self.tol)?,
            TimeKind::Imaginary => acc.canonicalize(self.tol)?,
        };
        Ok(ExpansionResult::new(sum, order, 1, ExpansionMode::Commutator))
    }

    /// `Σ_{k+k'≤K} a^k b^{k'}/(k! k'!) H^k O H^{k'}` with `(a, b) = (it, −it)` for
    /// real time and `(−τ, −τ)` for imaginary time.
    pub fn heisenberg_direct_expansion(
        &self,
        h: &HamiltonianSpec,
        obs: &ObservableSpec,
        time: TimeParameter,
        order: usize,
    ) -> Result<ExpansionResult> {
        Error::check_dims(h.n_qubits(), obs.n_qubits())?;
        let a = time.left_generator();
        let b = time.generator();
        let hs = self.hamiltonian_sum(h);
        let powers = self.powers(&hs, order, h)?;
        let o = obs.observable().clone().with_tolerance(self.tol);
        let mut acc = PauliSum::new(h.n_qubits()).with_tolerance(self.tol);
        let mut a_pow = Complex64::new(1.0, 0.0);
        for k in 0..=order {
            let left = powers[k].multiply(&o)?.scale(a_pow / factorial(k));
            let mut b_pow = Complex64::new(1.0, 0.0);
            for kp in 0..=order - k {
                let piece = left.multiply(&powers[kp])?.scale(b_pow / factorial(kp));
                acc.add_assign(&piece)?;
                b_pow *= b;
            }
            self.guard(&acc, || {
                term_count_bound(h.n_terms(), order, 1, true).saturating_mul(o.len() as u64)
            })?;
            a_pow *= a;
        }
        let sum = acc.with_hermitian_hint(true).canonicalize(self.tol)?;
        Ok(ExpansionResult::new(sum, order, 1, ExpansionMode::Direct))
    }

    fn powers(&self, hs: &PauliSum, order: usize, h: &HamiltonianSpec) -> Result<Vec<PauliSum>> {
        let mut powers = vec![PauliSum::identity(hs.n_qubits()).with_tolerance(self.tol)];
        for k in 1..=order {
            let next = powers[k - 1].multiply(hs)?;
            self.guard(&next, || term_count_bound(h.n_terms(), k, 1, false))?;
            powers.push(next);
        }
        Ok(powers)
    }

    /// `e^{iH₁t₁}⋯e^{iH_r t_r} O e^{−iH_r t_r}⋯e^{−iH₁t₁}`: stages are applied
    /// innermost first, i.e. from the end of the list.
    pub fn conjugate_sequence(&self, stages: &[Stage], obs: &ObservableSpec) -> Result<ExpansionResult> {
        let mut current = obs.clone();
        let mut max_order = 0;
        let mut total_segments = 0;
        for stage in stages.iter().rev() {
            let res = self.heisenberg_taylor_concat(
                &stage.hamiltonian,
                &current,
                stage.time,
                stage.order,
                stage.segments,
            )?;
            max_order = max_order.max(stage.order);
            total_segments += stage.segments;
            current = ObservableSpec::new(res.sum)?;
        }
        Ok(ExpansionResult::new(
            current.observable().clone(),
            max_order,
            total_segments.max(1),
            ExpansionMode::Concat,
        ))
    }

    /// Coefficients of `t^d`, `d = 0..=2K`, of the concatenated expansion with a
    /// single segment: entry `d` collects `(i^k/k!)((−i)^{k'}/k'!) H^k O H^{k'}`
    /// over `k + k' = d`, `k, k' ≤ K`.
    pub fn concat_graded(&self, h: &HamiltonianSpec, obs: &ObservableSpec, order: usize) -> Result<Vec<PauliSum>> {
        let n = h.n_qubits();
        let gen = self.hamiltonian_sum(h).scale(Complex64::new(0.0, -1.0));
        let mut pieces = vec![PauliSum::identity(n).with_tolerance(self.tol)];
        for k in 1..=order {
            let next = pieces[k - 1].multiply(&gen)?.scale(Complex64::new(1.0 / k as f64, 0.0));
            pieces.push(next);
        }
        let o = obs.observable().clone().with_tolerance(self.tol);
        let mut graded = vec![PauliSum::new(n).with_tolerance(self.tol); 2 * order + 1];
        for (k, left) in pieces.iter().enumerate() {
            let lo = left.adjoint().multiply(&o)?;
            for (kp, right) in pieces.iter().enumerate() {
                graded[k + kp].add_assign(&lo.multiply(right)?)?;
            }
        }
        Ok(graded)
    }

    /// Coefficients of `t^d`, `d = 0..=K`, of the real-time direct expansion.
    pub fn direct_graded(&self, h: &HamiltonianSpec, obs: &ObservableSpec, order: usize) -> Result<Vec<PauliSum>> {
        let hs = self.hamiltonian_sum(h);
        let powers = self.powers(&hs, order, h)?;
        let o = obs.observable().clone().with_tolerance(self.tol);
        let i = Complex64::new(0.0, 1.0);
        let mut graded = vec![PauliSum::new(h.n_qubits()).with_tolerance(self.tol); order + 1];
        for k in 0..=order {
            let left = powers[k].multiply(&o)?;
            for kp in 0..=order - k {
                let c = i.powi(k as i32 - kp as i32) / (factorial(k) * factorial(kp));
                graded[k + kp].add_assign(&left.multiply(&powers[kp])?.scale(c))?;
            }
        }
        Ok(graded)
    }

    /// Coefficients of `t^d`, `d = 0..=K`, of the real-time nested-commutator series.
    pub fn commutator_graded(&self, h: &HamiltonianSpec, obs: &ObservableSpec, order: usize) -> Result<Vec<PauliSum>> {
        let hs = self.hamiltonian_sum(h);
        let mut nested = obs.observable().clone().with_tolerance(self.tol).with_hermitian_hint(false);
        let i = Complex64::new(0.0, 1.0);
        let mut graded = Vec::with_capacity(order + 1);
        for d in 0..=order {
            if d > 0 {
                nested = hs.commutator(&nested)?;
            }
            graded.push(nested.scale(i.powi(d as i32) / factorial(d)));
        }
        Ok(graded)
    }
}

/// `Σ_{d≤max_order} t^d · graded[d]`.
pub fn evaluate_graded(graded: &[PauliSum], t: f64, max_order: usize) -> Result<PauliSum> {
    let first = graded.first().ok_or(Error::EmptySum)?;
    let mut acc = PauliSum::new(first.n_qubits()).with_tolerance(first.tolerance());
    let mut tp = 1.0;
    for g in graded.iter().take(max_order + 1) {
        acc.add_assign(&g.scale(Complex64::new(tp, 0.0)))?;
        tp *= t;
    }
    Ok(acc)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// One factor `e^{iH t}` of a conjugation sequence.
#[derive(Debug, Clone)]
pub struct Stage {
    pub hamiltonian: HamiltonianSpec,
    pub time: TimeParameter,
    pub order: usize,
    pub segments: usize,
}

pub fn expand_propagator(h: &HamiltonianSpec, time: TimeParameter, order: usize) -> Result<PauliSum> {
    Expander::default().expand_propagator(h, time, order)
}

pub fn conjugate_expansion(u: &PauliSum, obs: &ObservableSpec) -> Result<PauliSum> {
    Expander::default().conjugate_expansion(u, obs)
}

pub fn heisenberg_taylor_concat(
    h: &HamiltonianSpec,
    obs: &ObservableSpec,
    time: TimeParameter,
    order: usize,
    segments: usize,
) -> Result<ExpansionResult> {
    Expander::default().heisenberg_taylor_concat(h, obs, time, order, segments)
}

pub fn heisenberg_commutator_series(
    h: &HamiltonianSpec,
    obs: &ObservableSpec,
    time: TimeParameter,
    order: usize,
) -> Result<ExpansionResult> {
    Expander::default().heisenberg_commutator_series(h, obs, time, order)
}

pub fn heisenberg_direct_expansion(
    h: &HamiltonianSpec,
    obs: &ObservableSpec,
    time: TimeParameter,
    order: usize,
) -> Result<ExpansionResult> {
    Expander::default().heisenberg_direct_expansion(h, obs, time, order)
}

pub fn conjugate_sequence(stages: &[Stage], obs: &ObservableSpec) -> Result<ExpansionResult> {
    Expander::default().conjugate_sequence(stages, obs)
}

/// Propagator-only expansion wrapped as a result (no conjugation, complex coefficients).
pub fn propagator_result(h: &HamiltonianSpec, time: TimeParameter, order: usize, segments: usize, expander: &Expander) -> Result<ExpansionResult> {
    if segments == 0 {
        return Err(Error::InvalidArgument("segment count r must be >= 1".into()));
    }
    let segment = expander.expand_propagator(h, time.split(segments), order)?;
    let mut total = segment.clone();
    for _ in 1..segments {
        total = total.multiply(&segment)?;
        expander.guard(&total, || term_count_bound(h.n_terms(), order, segments, false))?;
    }
    Ok(ExpansionResult::new(total, order, segments, ExpansionMode::PropagatorOnly))
}

/// Parse helper used by the CLI and tests: a single Pauli string observable.
pub fn pauli_observable(s: &str) -> Result<ObservableSpec> {
    Ok(ObservableSpec::pauli(s.parse::<PauliString>()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_heisenberg_chain;
    use crate::model::parse_hamiltonian;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    fn hx() -> HamiltonianSpec {
        parse_hamiltonian("1.0 X").unwrap()
    }

    #[test]
    fn order_selection() {
        assert_eq!(select_truncation_order(1.0, 1e-3).unwrap(), 6);
        assert_eq!(select_truncation_order(1.0, 0.5).unwrap(), 1);
        assert_eq!(select_truncation_order(0.0, 1e-9).unwrap(), 0);
        // 0.9^6/720 ≈ 7.4e-4 already meets 1e-3; 0.9^5/120 ≈ 4.9e-3 does not.
        assert_eq!(select_truncation_order(0.9, 1e-3).unwrap(), 5);
        assert!(matches!(
            select_truncation_order_capped(50.0, 1e-12, 10),
            Err(Error::OrderCapExceeded { .. })
        ));
    }

    #[test]
    fn propagator_examples() {
        let u = expand_propagator(&hx(), TimeParameter::real(0.1).unwrap(), 2).unwrap();
        assert_eq!(u.len(), 2);
        assert!(close(u.coefficient(&p("I")), c(0.995, 0.0)));
        assert!(close(u.coefficient(&p("X")), c(0.0, -0.1)));

        let h = build_heisenberg_chain(3, 0.7).unwrap();
        let u0 = expand_propagator(&h, TimeParameter::real(0.3).unwrap(), 0).unwrap();
        assert_eq!(u0, PauliSum::identity(3));

        let ui = expand_propagator(&hx(), TimeParameter::imaginary(0.1).unwrap(), 1).unwrap();
        assert!(close(ui.coefficient(&p("I")), c(1.0, 0.0)));
        assert!(close(ui.coefficient(&p("X")), c(-0.1, 0.0)));
    }

    #[test]
    fn imaginary_trace() {
        let u = expand_propagator(&hx(), TimeParameter::imaginary(0.2).unwrap(), 2).unwrap();
        // e^{-2τX} with τ = 0.1: 1 + (0.2)²/2 on the identity.
        assert!(close(u.identity_coefficient(), c(1.02, 0.0)));
        assert!((2.0 * u.identity_coefficient().re - 2.04).abs() < 1e-12);
        assert!((2.0 * 0.2f64.cosh() - 2.040133).abs() < 1e-6);
    }

    #[test]
    fn conjugate_examples() {
        let o = pauli_observable("Z").unwrap();
        let u = PauliSum::from_terms(1, [(c(1.0, 0.0), p("I")), (c(0.0, -0.1), p("X"))]).unwrap();
        let out = conjugate_expansion(&u, &o).unwrap();
        assert_eq!(out.len(), 2);
        assert!(close(out.coefficient(&p("Z")), c(0.99, 0.0)));
        assert!(close(out.coefficient(&p("Y")), c(0.2, 0.0)));

        assert_eq!(
            conjugate_expansion(&PauliSum::identity(1), &o).unwrap(),
            o.observable().clone()
        );

        let id = ObservableSpec::pauli(p("I"));
        let out = conjugate_expansion(&u, &id).unwrap();
        assert_eq!(out.len(), 1);
        assert!(close(out.identity_coefficient(), c(1.01, 0.0)));
    }

    #[test]
    fn concat_examples() {
        let o = pauli_observable("Z").unwrap();
        let r = heisenberg_taylor_concat(&hx(), &o, TimeParameter::real(0.1).unwrap(), 1, 1).unwrap();
        assert_eq!(r.stats.m_tot, 2);
        assert!((r.stats.gamma_l1 - 1.19).abs() < 1e-12);
        assert_eq!(r.stats.w_max, 1);

        let h = build_heisenberg_chain(3, 1.0).unwrap();
        let o3 = pauli_observable("ZIX").unwrap();
        let r0 = heisenberg_taylor_concat(&h, &o3, TimeParameter::real(0.0).unwrap(), 4, 2).unwrap();
        assert_eq!(r0.sum, o3.observable().clone());
    }

    #[test]
    fn heisenberg_two_site_propagator_strings() {
        let h = build_heisenberg_chain(2, 1.0).unwrap();
        let u = expand_propagator(&h, TimeParameter::real(0.1).unwrap(), 2).unwrap();
        let mut keys: Vec<String> = u.iter().map(|(p, _)| p.to_string()).collect();
        keys.sort();
        assert_eq!(keys, vec!["II", "XX", "YY", "ZZ"]);
    }

    #[test]
    fn commutator_examples() {
        let o = pauli_observable("Z").unwrap();
        let t = TimeParameter::real(0.1).unwrap();
        let r1 = heisenberg_commutator_series(&hx(), &o, t, 1).unwrap();
        assert!(close(r1.sum.coefficient(&p("Z")), c(1.0, 0.0)));
        assert!(close(r1.sum.coefficient(&p("Y")), c(0.2, 0.0)));
        let r2 = heisenberg_commutator_series(&hx(), &o, t, 2).unwrap();
        assert!(close(r2.sum.coefficient(&p("Z")), c(0.98, 0.0)));
        assert!(close(r2.sum.coefficient(&p("Y")), c(0.2, 0.0)));
        let r0 = heisenberg_commutator_series(&hx(), &o, t, 0).unwrap();
        assert_eq!(r0.sum, o.observable().clone());
    }

    #[test]
    fn direct_examples() {
        let o = pauli_observable("Z").unwrap();
        let t = TimeParameter::real(0.1).unwrap();
        let r1 = heisenberg_direct_expansion(&hx(), &o, t, 1).unwrap();
        assert!(close(r1.sum.coefficient(&p("Z")), c(1.0, 0.0)));
        assert!(close(r1.sum.coefficient(&p("Y")), c(0.2, 0.0)));
        let r0 = heisenberg_direct_expansion(&hx(), &o, t, 0).unwrap();
        assert_eq!(r0.sum, o.observable().clone());
        let d2 = heisenberg_direct_expansion(&hx(), &o, t, 2).unwrap();
        let c2 = heisenberg_commutator_series(&hx(), &o, t, 2).unwrap();
        assert!(d2.sum.max_coefficient_distance(&c2.sum) < 1e-12);
    }

    #[test]
    fn sequence_examples() {
        let o = pauli_observable("Z").unwrap();
        let t = TimeParameter::real(0.1).unwrap();
        let single = heisenberg_taylor_concat(&hx(), &o, t, 3, 1).unwrap();
        let stage = Stage { hamiltonian: hx(), time: t, order: 3, segments: 1 };
        let seq = conjugate_sequence(std::slice::from_ref(&stage), &o).unwrap();
        assert_eq!(seq.sum, single.sum);
        assert_eq!(conjugate_sequence(&[], &o).unwrap().sum, o.observable().clone());

        let two = conjugate_sequence(&[stage.clone(), stage], &o).unwrap();
        // Exact: cos(0.4) Z + sin(0.4) Y.
        let err_z = (two.sum.coefficient(&p("Z")).re - 0.4f64.cos()).abs();
        let err_y = (two.sum.coefficient(&p("Y")).re - 0.4f64.sin()).abs();
        let eps = propagator_tail_bound(0.1, 3);
        let per_stage = 2.0 * eps + eps * eps;
        assert!(err_z <= 2.0 * per_stage && err_y <= 2.0 * per_stage, "{err_z} {err_y}");
    }

    #[test]
    fn stats_examples() {
        let s = PauliSum::from_real_terms(&[(0.99, "Z"), (0.2, "Y")]).unwrap();
        let st = expansion_stats(&s);
        assert_eq!((st.m_tot, st.w_max), (2, 1));
        assert!((st.gamma_l1 - 1.19).abs() < 1e-15);
        let st = expansion_stats(&PauliSum::new(2));
        assert_eq!((st.m_tot, st.gamma_l1, st.w_max), (0, 0.0, 0));
        let st = expansion_stats(&PauliSum::identity(3));
        assert_eq!((st.m_tot, st.w_max), (1, 0));
        assert_eq!(st.identity_coeff, c(1.0, 0.0));
    }

    #[test]
    fn term_cap_guard_reports_prediction() {
        let h = build_heisenberg_chain(5, 1.0).unwrap();
        let err = Expander::with_term_cap(20)
            .expand_propagator(&h, TimeParameter::real(0.1).unwrap(), 3)
            .unwrap_err();
        match err {
            Error::TermCountExceeded { cap, predicted, .. } => {
                assert_eq!(cap, 20);
                assert_eq!(predicted, term_count_bound(12, 3, 1, false).to_string());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn graded_concat_truncates_to_direct() {
        let h = build_heisenberg_chain(3, 0.8).unwrap();
        let o = pauli_observable("ZII").unwrap();
        let e = Expander::default();
        let cg = e.concat_graded(&h, &o, 3).unwrap();
        let dg = e.direct_graded(&h, &o, 3).unwrap();
        for d in 0..=3 {
            assert!(cg[d].max_coefficient_distance(&dg[d]) < 1e-12);
        }
        let t = 0.07;
        let full = e.heisenberg_taylor_concat(&h, &o, TimeParameter::real(t).unwrap(), 3, 1).unwrap();
        let from_graded = evaluate_graded(&cg, t, 6).unwrap();
        assert!(full.sum.max_coefficient_distance(&from_graded) < 1e-12);
    }
}
