use serde::{Deserialize, Serialize};

use super::dense::{exact_expectation, hermitian_exp, sum_to_matrix, DenseState};
use super::ExactSource;
use crate::bounds::{
    direct_expansion_tail_bound, hoeffding_shots, imaginary_propagator_tail_bound, shadow_shots,
    BoundInputs, BoundReport,
};
use crate::error::{Error, Result};
use crate::estimation::{estimate_sum, EstimateReport, EstimationConfig, Method, DEFAULT_BLOCK_SIZE};
use crate::expansion::{
    propagator_result, select_truncation_order_capped, Expander, ExpansionMode, ExpansionResult,
    ExpansionStats, TimeKind, TimeParameter, DEFAULT_ORDER_CAP, DEFAULT_TERM_CAP,
};
use crate::model::{HamiltonianSpec, ObservableSpec};
use crate::pauli::{PauliSum, DEFAULT_TOLERANCE};

/// Smallest truncation target accepted: well above the coefficient pruning tolerance,
/// whose effect the truncation bounds do not include.
pub const MIN_EPS: f64 = 100.0 * DEFAULT_TOLERANCE;

/// Largest shot count auto-resolution will pick before asking for an explicit value.
pub const MAX_AUTO_SHOTS: u64 = 1_000_000_000;

/// Denominator of the imaginary-time energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `tr(e^{−2τH} ρ)`, measured on the same state.
    #[default]
    State,
    /// `tr(e^{−2τH})` from the identity coefficient of the expansion.
    Trace,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(Normalization::State),
            "trace" => Ok(Normalization::Trace),
            other => Err(Error::InvalidArgument(format!(
                "unknown normalization {other:?} (expected state or trace)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowConfig {
    /// Truncation target for automatic order selection.
    pub eps: f64,
    /// Additive sampling error for automatic shot counts.
    pub sampling_eps: f64,
    pub delta: f64,
    pub order: Option<usize>,
    pub segments: Option<usize>,
    pub mode: ExpansionMode,
    pub shots: Option<u64>,
    pub seed: u64,
    pub method: Method,
    pub term_cap: usize,
    pub order_cap: usize,
    pub separate_identity: bool,
    pub median_of_means: Option<usize>,
    pub normalization: Normalization,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            eps: 1e-3,
            sampling_eps: 0.05,
            delta: 0.05,
            order: None,
            segments: None,
            mode: ExpansionMode::Concat,
            shots: None,
            seed: 0,
            method: Method::Exact,
            term_cap: DEFAULT_TERM_CAP,
            order_cap: DEFAULT_ORDER_CAP,
            separate_identity: false,
            median_of_means: None,
            normalization: Normalization::State,
        }
    }
}

impl WorkflowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("eps", self.eps)?;
        if self.eps < MIN_EPS {
            return Err(Error::InvalidArgument(format!(
                "eps {} is below {MIN_EPS:e}; coefficient pruning at {DEFAULT_TOLERANCE:e} would dominate the truncation bound",
                self.eps
            )));
        }
        positive("sampling_eps", self.sampling_eps)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.segments == Some(0) {
            return Err(Error::InvalidArgument("segments must be >= 1".into()));
        }
        if self.shots == Some(0) {
            return Err(Error::InvalidArgument("shots must be >= 1".into()));
        }
        Ok(())
    }

    pub fn expander(&self) -> Expander {
        Expander::with_term_cap(self.term_cap)
    }

    pub fn estimation(&self, delta: f64) -> EstimationConfig {
        EstimationConfig {
            delta,
            block_size: DEFAULT_BLOCK_SIZE,
            separate_identity: self.separate_identity,
            median_of_means: self.median_of_means,
        }
    }

    /// Explicit shot count, or the count that meets `sampling_eps` at `delta` for
    /// this sum and method.
    pub fn resolve_shots(&self, s: &PauliSum, method: Method, delta: f64) -> Result<u64> {
        if let Some(n) = self.shots {
            return Ok(n);
        }
        let n = match method {
            Method::Exact => return Ok(0),
            Method::Importance => {
                let sampled = |part: PauliSum| {
                    part.iter()
                        .filter(|(p, _)| !(self.separate_identity && p.is_identity()))
                        .map(|(_, c)| c.re.abs())
                        .sum::<f64>()
                };
                if s.max_imag() > s.tolerance() {
                    let l1 = sampled(s.real_part()).max(sampled(s.imag_part()));
                    hoeffding_shots(l1, self.sampling_eps / 2f64.sqrt(), delta / 2.0)?
                } else {
                    hoeffding_shots(sampled(s.clone()), self.sampling_eps, delta)?
                }
            }
            Method::Shadow => {
                let (m, l1) = s
                    .iter()
                    .filter(|(p, _)| !p.is_identity())
                    .fold((0usize, 0.0), |(m, l1), (_, c)| (m + 1, l1 + c.norm()));
                if m == 0 {
                    1
                } else {
                    let per_term = (self.sampling_eps / l1).min(2.0 / 3.0);
                    shadow_shots(s.max_weight(), m, per_term, delta)?
                }
            }
        };
        if n > MAX_AUTO_SHOTS {
            return Err(Error::InvalidArgument(format!(
                "automatic shot count {n} exceeds {MAX_AUTO_SHOTS}; pass an explicit shot count or loosen sampling_eps"
            )));
        }
        Ok(n.max(1))
    }
}

/// Resolved truncation order and segment count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub order: usize,
    pub segments: usize,
}

/// Explicit values win. Otherwise `r = max(1, ⌈λt⌉)` for segmented modes (1 for
/// direct and commutator modes) and `K` is the smallest order whose tail bound
/// meets `eps`: `Λ^{K+1}/(K+1)! ≤ eps/r` per segment for propagator-based modes,
/// `(2Λ)^{K+1}/(K+1)! ≤ eps/‖O‖` for direct and commutator modes. Imaginary time
/// divides the budget by the `e^Λ` growth factor of the tail.
pub fn resolve_plan(
    cfg: &WorkflowConfig,
    lambda: f64,
    time: TimeParameter,
    norm_o: f64,
    mode: ExpansionMode,
) -> Result<Plan> {
    cfg.validate()?;
    let lt = lambda * time.value();
    let unsegmented = matches!(mode, ExpansionMode::Direct | ExpansionMode::Commutator);
    let segments = match cfg.segments {
        Some(r) if unsegmented && r > 1 => {
            return Err(Error::InvalidArgument(format!(
                "{mode} mode does not support segmentation (got r = {r})"
            )))
        }
        Some(r) => r,
        None if unsegmented => 1,
        None => (lt.ceil() as usize).max(1),
    };
    let order = match cfg.order {
        Some(k) => k,
        None => {
            let seg = lt / segments as f64;
            let imaginary = time.kind() == TimeKind::Imaginary;
            let (x, budget) = if unsegmented {
                let growth = if imaginary { (2.0 * seg).exp() } else { 1.0 };
                (2.0 * seg, cfg.eps / norm_o.max(f64::MIN_POSITIVE) / growth)
            } else {
                let growth = if imaginary { seg.exp() } else { 1.0 };
                (seg, cfg.eps / segments as f64 / growth)
            };
            select_truncation_order_capped(x, budget, cfg.order_cap)?
        }
    };
    Ok(Plan { order, segments })
}

/// Expand `O(t)` (or `Ũ(t)` for propagator-only mode) according to `mode`.
pub fn heisenberg_expand(
    h: &HamiltonianSpec,
    obs: &ObservableSpec,
    time: TimeParameter,
    plan: Plan,
    mode: ExpansionMode,
    expander: &Expander,
) -> Result<ExpansionResult> {
    match mode {
        ExpansionMode::Concat => expander.heisenberg_taylor_concat(h, obs, time, plan.order, plan.segments),
        ExpansionMode::Direct => expander.heisenberg_direct_expansion(h, obs, time, plan.order),
        ExpansionMode::Commutator => expander.heisenberg_commutator_series(h, obs, time, plan.order),
        ExpansionMode::PropagatorOnly => propagator_result(h, time, plan.order, plan.segments, expander),
    }
}

/// Bounds for an expansion of `h` (and `obs`, absent for propagator-only runs).
pub fn bound_report(
    h: &HamiltonianSpec,
    obs: Option<&ObservableSpec>,
    time: TimeParameter,
    expansion: &ExpansionResult,
    cfg: &WorkflowConfig,
) -> Result<BoundReport> {
    let stats = &expansion.stats;
    let (m_non_identity, gamma_l1_non_identity) = expansion
        .sum
        .iter()
        .filter(|(p, _)| !p.is_identity())
        .fold((0usize, 0.0), |(m, l1), (_, c)| (m + 1, l1 + c.norm()));
    BoundReport::compute(BoundInputs {
        mode: expansion.mode,
        time_kind: time.kind(),
        norm_h: h.lambda(),
        time: time.value(),
        order: expansion.order,
        segments: expansion.segments,
        n_terms: h.n_terms(),
        eps: cfg.eps,
        sampling_eps: cfg.sampling_eps,
        delta: cfg.delta,
        norm_o: obs.map_or(1.0, ObservableSpec::norm_bound),
        observable_terms: obs.map_or(1, |o| o.observable().len()),
        observable_l1: obs.map_or(1.0, |o| o.observable().l1_norm()),
        w_max: stats.w_max,
        m_tot: stats.m_tot,
        gamma_l1: stats.gamma_l1,
        m_non_identity,
        gamma_l1_non_identity,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub plan: Plan,
    pub stats: ExpansionStats,
    pub bounds: BoundReport,
    /// Estimate of `tr(Õ(−t) ρ(t))`.
    pub estimate: EstimateReport,
    /// `tr(O ρ)` on the initial state.
    pub baseline: f64,
    pub residual: f64,
    /// Truncation bound plus sampling radius.
    pub radius: f64,
    /// `|residual| > radius`.
    pub flagged: bool,
}

/// Evolve `ρ` under `h_sys` exactly, pull `O` back under `h_guess` by the expansion,
/// and report `tr(O(−t)ρ(t)) − tr(Oρ)`, which vanishes when the two agree.
pub fn verify_hamiltonian_residual(
    h_sys: &HamiltonianSpec,
    h_guess: &HamiltonianSpec,
    obs: &ObservableSpec,
    time: TimeParameter,
    state: &DenseState,
    cfg: &WorkflowConfig,
) -> Result<VerifyOutcome> {
    Error::check_dims(h_sys.n_qubits(), h_guess.n_qubits())?;
    Error::check_dims(h_sys.n_qubits(), obs.n_qubits())?;
    if time.kind() != TimeKind::Real {
        return Err(Error::InvalidArgument("verification needs real time".into()));
    }
    if cfg.mode == ExpansionMode::PropagatorOnly {
        return Err(Error::InvalidArgument("verification needs an observable expansion mode".into()));
    }
    let evolved = super::dense::exact_evolve(h_sys, state, time)?;
    // e^{i(−H)t} O e^{−i(−H)t} = O(−t)
    let backward = h_guess.negated();
    let plan = resolve_plan(cfg, backward.lambda(), time, obs.norm_bound(), cfg.mode)?;
    let expansion = heisenberg_expand(&backward, obs, time, plan, cfg.mode, &cfg.expander())?;
    let bounds = bound_report(&backward, Some(obs), time, &expansion, cfg)?;
    let src = ExactSource::new(evolved);
    let shots = cfg.resolve_shots(&expansion.sum, cfg.method, cfg.delta)?;
    let estimate = estimate_sum(&expansion.sum, &src, cfg.method, shots, cfg.seed, &cfg.estimation(cfg.delta))?;
    let baseline = exact_expectation(obs.observable(), state)?.re;
    let residual = estimate.estimate.re - baseline;
    let radius = bounds.total_systematic + estimate.confidence_radius;
    Ok(VerifyOutcome {
        plan,
        stats: expansion.stats,
        bounds,
        estimate,
        baseline,
        residual,
        radius,
        flagged: residual.abs() > radius,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyOutcome {
    pub plan: Plan,
    pub numerator_stats: ExpansionStats,
    pub denominator_stats: ExpansionStats,
    /// Estimate of `tr(e^{−τH} H e^{−τH} ρ)`.
    pub numerator: EstimateReport,
    pub numerator_systematic: f64,
    pub denominator: EstimateReport,
    pub denominator_systematic: f64,
    pub normalization: Normalization,
    /// `2^n` times the identity coefficient of the `e^{−2τH}` expansion.
    pub partition_trace: f64,
    pub energy: f64,
    /// Propagated bound on `|energy − exact|` from both numerator and denominator radii.
    pub radius: f64,
}

/// `tr(e^{−τH} H e^{−τH} ρ) / tr(e^{−2τH} ρ)` from a direct expansion of the
/// numerator and a propagator expansion of `e^{−2τH}`, each estimated at `δ/2`.
pub fn imaginary_time_energy(
    h: &HamiltonianSpec,
    state: &DenseState,
    tau: f64,
    cfg: &WorkflowConfig,
) -> Result<EnergyOutcome> {
    Error::check_dims(h.n_qubits(), state.n_qubits())?;
    let time = TimeParameter::imaginary(tau)?;
    let lambda = h.lambda();
    let obs = ObservableSpec::new(h.to_sum())?.with_norm_bound(lambda)?;
    let plan = resolve_plan(cfg, lambda, time, lambda, ExpansionMode::Direct)?;
    let expander = cfg.expander();
    let numerator_exp = expander.heisenberg_direct_expansion(h, &obs, time, plan.order)?;
    let denominator_exp = propagator_result(h, TimeParameter::imaginary(2.0 * tau)?, plan.order, 1, &expander)?;

    let big_lambda = lambda * tau;
    let numerator_systematic =
        direct_expansion_tail_bound(big_lambda, plan.order, lambda) * (2.0 * big_lambda).exp();
    let prop_systematic = imaginary_propagator_tail_bound(2.0 * big_lambda, plan.order);

    let src = ExactSource::new(state.clone());
    let half = cfg.estimation(cfg.delta / 2.0);
    let n_shots = cfg.resolve_shots(&numerator_exp.sum, cfg.method, cfg.delta / 2.0)?;
    let numerator = estimate_sum(&numerator_exp.sum, &src, cfg.method, n_shots, cfg.seed, &half)?;

    let dim = 2f64.powi(h.n_qubits() as i32);
    let partition_trace = dim * denominator_exp.stats.identity_coeff.re;
    let (denominator, denominator_systematic) = match cfg.normalization {
        Normalization::State => {
            let d_shots = cfg.resolve_shots(&denominator_exp.sum, cfg.method, cfg.delta / 2.0)?;
            let seed = cfg.seed.wrapping_add(1);
            (
                estimate_sum(&denominator_exp.sum, &src, cfg.method, d_shots, seed, &half)?,
                prop_systematic,
            )
        }
        Normalization::Trace => (
            EstimateReport {
                estimate: num_complex::Complex64::new(partition_trace, 0.0),
                confidence_radius: 0.0,
                confidence_level: 1.0,
                shots_used: 0,
                method: Method::Exact,
                seed: cfg.seed,
            },
            dim * prop_systematic,
        ),
    };

    let n = numerator.estimate.re;
    let d = denominator.estimate.re;
    let r_n = numerator.confidence_radius + numerator_systematic;
    let r_d = denominator.confidence_radius + denominator_systematic;
    if d.abs() <= r_d {
        return Err(Error::StatisticalRefusal { value: d, radius: r_d });
    }
    // |n/d − N/D| ≤ (|N| r_d + |D| r_n) / (|d| |D|) with |N| ≤ |n| + r_n, |D| ≤ |d| + r_d, |D| ≥ |d| − r_d.
    let radius = ((n.abs() + r_n) * r_d + (d.abs() + r_d) * r_n) / (d.abs() * (d.abs() - r_d));
    Ok(EnergyOutcome {
        plan,
        numerator_stats: numerator_exp.stats,
        denominator_stats: denominator_exp.stats,
        numerator,
        numerator_systematic,
        denominator,
        denominator_systematic,
        normalization: cfg.normalization,
        partition_trace,
        energy: n / d,
        radius,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionOutcome {
    pub order: usize,
    pub stats: ExpansionStats,
    /// `2^n · [I] e^{−2τH}` from the truncated expansion.
    pub estimate: f64,
    pub systematic: f64,
    /// `Σ e^{−2τE}` from exact diagonalization, when within the dense cap.
    pub exact: Option<f64>,
}

/// `tr(e^{−2τH})` as `2^n` times the identity coefficient of the truncated expansion.
pub fn partition_trace(h: &HamiltonianSpec, tau: f64, cfg: &WorkflowConfig) -> Result<PartitionOutcome> {
    let time = TimeParameter::imaginary(2.0 * tau)?;
    let lambda = h.lambda();
    let plan = resolve_plan(
        &WorkflowConfig {
            segments: Some(1),
            ..cfg.clone()
        },
        lambda,
        time,
        1.0,
        ExpansionMode::PropagatorOnly,
    )?;
    let expansion = propagator_result(h, time, plan.order, 1, &cfg.expander())?;
    let dim = 2f64.powi(h.n_qubits() as i32);
    let exact = match sum_to_matrix(&h.to_sum()) {
        Ok(m) => Some(hermitian_exp(&m, time.generator()).trace().re),
        Err(e) if e.is_guard() => None,
        Err(e) => return Err(e),
    };
    Ok(PartitionOutcome {
        order: plan.order,
        estimate: dim * expansion.stats.identity_coeff.re,
        systematic: dim * imaginary_propagator_tail_bound(lambda * time.value(), plan.order),
        exact,
        stats: expansion.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::pauli_observable;
    use crate::model::{build_heisenberg_chain, parse_hamiltonian};

    #[test]
    fn auto_plan() {
        let cfg = WorkflowConfig::default();
        let plan = resolve_plan(&cfg, 9.0, TimeParameter::real(0.1).unwrap(), 1.0, ExpansionMode::Concat).unwrap();
        assert_eq!(plan, Plan { order: 5, segments: 1 });
        let explicit = WorkflowConfig {
            order: Some(3),
            ..cfg.clone()
        };
        let plan = resolve_plan(&explicit, 9.0, TimeParameter::real(0.1).unwrap(), 1.0, ExpansionMode::Concat).unwrap();
        assert_eq!(plan.order, 3);
        let plan = resolve_plan(&cfg, 9.0, TimeParameter::real(0.25).unwrap(), 1.0, ExpansionMode::Concat).unwrap();
        assert_eq!(plan.segments, 3);
        let seg = WorkflowConfig {
            segments: Some(2),
            ..cfg
        };
        assert!(resolve_plan(&seg, 1.0, TimeParameter::real(0.1).unwrap(), 1.0, ExpansionMode::Direct).is_err());
    }

    #[test]
    fn verify_identical_and_zero_time() {
        let h = build_heisenberg_chain(3, 1.0).unwrap();
        let obs = pauli_observable("ZII").unwrap();
        let state = DenseState::basis("010").unwrap();
        let cfg = WorkflowConfig::default();
        let out = verify_hamiltonian_residual(&h, &h, &obs, TimeParameter::real(0.05).unwrap(), &state, &cfg).unwrap();
        assert!(!out.flagged, "{out:?}");
        let out = verify_hamiltonian_residual(&h, &h, &obs, TimeParameter::real(0.0).unwrap(), &state, &cfg).unwrap();
        assert_eq!(out.residual, 0.0);
    }

    #[test]
    fn imaginary_energy_single_qubit() {
        let h = parse_hamiltonian("1 X").unwrap();
        let zero = DenseState::basis("0").unwrap();
        let cfg = WorkflowConfig {
            eps: 1e-9,
            ..Default::default()
        };
        let out = imaginary_time_energy(&h, &zero, 0.1, &cfg).unwrap();
        assert!((out.energy + 0.2f64.tanh()).abs() <= out.radius, "{out:?}");
        assert!((out.energy + 0.197375).abs() < 1e-6);
        let out = imaginary_time_energy(&h, &zero, 0.0, &cfg).unwrap();
        assert_eq!(out.energy, 0.0);
        let mut last = f64::INFINITY;
        for i in 0..6 {
            let e = imaginary_time_energy(&h, &zero, 0.05 * i as f64, &cfg).unwrap().energy;
            assert!(e < last && e > -1.0);
            last = e;
        }
    }

    #[test]
    fn partition_matches_exact() {
        let h = build_heisenberg_chain(3, 0.5).unwrap();
        let cfg = WorkflowConfig {
            eps: 1e-9,
            ..Default::default()
        };
        let out = partition_trace(&h, 0.1, &cfg).unwrap();
        let exact = out.exact.unwrap();
        assert!((out.estimate - exact).abs() <= out.systematic);
    }
}
