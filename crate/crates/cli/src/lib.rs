//! Batch front end: resolve a run configuration, execute one workflow and build a
//! schema-versioned JSON report.

pub mod config;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use shortdyn_core::bounds::{gamma_l1_bound, term_count_bound, BoundInputs, BoundReport};
use shortdyn_core::estimation::{
    draw_shadows_seeded, estimate_sum, load_shadows, shadow_estimate_sum, write_shadows_jsonl,
    EstimateReport, Method,
};
use shortdyn_core::expansion::{ExpansionMode, ExpansionResult, ExpansionStats, TimeKind, TimeParameter};
use shortdyn_core::model::{
    build_heisenberg_chain, parse_hamiltonian, parse_observable, parse_state, staggered_magnetization,
    HamiltonianSpec, ObservableSpec,
};
use shortdyn_core::pauli::{PauliString, TermRecord};
use shortdyn_core::reference::{
    bound_report, exact_evolve, exact_expectation, heisenberg_expand, hermitian_exp,
    imaginary_time_energy, partition_trace, resolve_plan, set_qubit_caps, sum_to_matrix,
    verify_hamiltonian_residual, DenseState, EnergyOutcome, ExactSource, PartitionOutcome, Plan,
    VerifyOutcome, WorkflowConfig, DEFAULT_DENSITY_QUBIT_CAP, DEFAULT_QUBIT_CAP,
};
use shortdyn_core::{Complex64, Error};

pub use config::{resolve_config, Choice, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    /// 2 for input errors, 3 for guard aborts, 4 for statistical refusals.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_guard() => 3,
            CliError::Core(e) if e.is_statistical_refusal() => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Expand,
    Bounds,
    Estimate,
    Loschmidt,
    Verify,
    ImagEnergy,
    TraceZ,
}

/// Exact values from the dense backend, for cross-checking.
#[derive(Debug, Clone, Serialize, Default)]
pub struct Reference {
    /// The expanded sum evaluated exactly on the state.
    pub truncated: Option<Complex64>,
    /// The target quantity from exact evolution.
    pub exact: Option<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Workflow {
    Verify(VerifyOutcome),
    Energy(EnergyOutcome),
    Partition(PartitionOutcome),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub version: &'static str,
    pub command: CommandKind,
    pub config: RunConfig,
    pub plan: Option<Plan>,
    pub stats: Option<ExpansionStats>,
    pub bounds: Option<BoundReport>,
    pub estimate: Option<EstimateReport>,
    pub reference: Option<Reference>,
    pub workflow: Option<Workflow>,
    pub terms: Option<Vec<TermRecord>>,
    pub wall_time_s: f64,
}

impl RunReport {
    fn new(command: CommandKind, config: &RunConfig) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: config.clone(),
            plan: None,
            stats: None,
            bounds: None,
            estimate: None,
            reference: None,
            workflow: None,
            terms: None,
            wall_time_s: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report without its wall-time field, for reproducibility comparisons.
    pub fn to_json_without_wall_time(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_time_s");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn hamiltonian(cfg: &RunConfig) -> Result<HamiltonianSpec, CliError> {
    match (cfg.heisenberg, &cfg.hamiltonian) {
        (Some(n), _) => Ok(build_heisenberg_chain(n, cfg.coupling.unwrap_or(1.0))?),
        (None, Some(path)) => Ok(parse_hamiltonian(&read(path)?)?),
        (None, None) => Err(CliError::Input(
            "missing Hamiltonian: pass --hamiltonian PATH or --heisenberg N".into(),
        )),
    }
}

fn observable(cfg: &RunConfig, n: usize) -> Result<ObservableSpec, CliError> {
    let obs = if let Some(p) = &cfg.pauli {
        ObservableSpec::pauli(p.parse::<PauliString>()?)
    } else if cfg.staggered == Some(true) {
        staggered_magnetization(n)
    } else if let Some(path) = &cfg.observable {
        parse_observable(&read(path)?)?
    } else {
        return Err(CliError::Input(
            "missing observable: pass --observable PATH, --pauli STRING or --staggered".into(),
        ));
    };
    check_qubits("observable", obs.n_qubits(), n)?;
    Ok(obs)
}

fn state(cfg: &RunConfig, n: usize) -> Result<DenseState, CliError> {
    let spec = cfg
        .state
        .as_deref()
        .ok_or_else(|| CliError::Input("missing initial state: pass --state SPEC".into()))?;
    let st = DenseState::from_spec(&parse_state(spec)?)?;
    check_qubits("state", st.n_qubits(), n)?;
    Ok(st)
}

fn check_qubits(what: &str, got: usize, n: usize) -> Result<(), CliError> {
    if got == n {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} acts on {got} qubits but the Hamiltonian on {n}")))
    }
}

fn real_time(cfg: &RunConfig) -> Result<TimeParameter, CliError> {
    match cfg.time {
        Some(t) => Ok(TimeParameter::real(t)?),
        None => Err(CliError::Input("missing --time".into())),
    }
}

fn tau(cfg: &RunConfig) -> Result<f64, CliError> {
    cfg.tau.ok_or_else(|| CliError::Input("missing --tau".into()))
}

/// `--time` or `--tau`, exactly one.
fn any_time(cfg: &RunConfig) -> Result<TimeParameter, CliError> {
    match (cfg.time, cfg.tau) {
        (Some(_), Some(_)) => Err(CliError::Input("pass either --time or --tau, not both".into())),
        (Some(t), None) => Ok(TimeParameter::real(t)?),
        (None, Some(t)) => Ok(TimeParameter::imaginary(t)?),
        (None, None) => Err(CliError::Input("missing --time (or --tau for imaginary time)".into())),
    }
}

fn expansion_with_plan(
    h: &HamiltonianSpec,
    obs: Option<&ObservableSpec>,
    time: TimeParameter,
    mode: ExpansionMode,
    wf: &WorkflowConfig,
) -> Result<(Plan, ExpansionResult), CliError> {
    let norm_o = obs.map_or(1.0, ObservableSpec::norm_bound);
    let plan = resolve_plan(wf, h.lambda(), time, norm_o, mode)?;
    let expansion = match obs {
        Some(o) => heisenberg_expand(h, o, time, plan, mode, &wf.expander())?,
        None => shortdyn_core::expansion::propagator_result(h, time, plan.order, plan.segments, &wf.expander())?,
    };
    Ok((plan, expansion))
}

/// Execute one command. Dense-backend caps from the config are applied process-wide.
pub fn execute(command: CommandKind, cfg: &RunConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let density_cap = config::density_cap_from_env()?.unwrap_or(DEFAULT_DENSITY_QUBIT_CAP);
    let qubit_cap = cfg.qubit_cap.unwrap_or(DEFAULT_QUBIT_CAP);
    set_qubit_caps(qubit_cap, density_cap.min(qubit_cap));
    let wf = cfg.workflow();
    wf.validate()?;
    let mut report = RunReport::new(command, cfg);
    match command {
        CommandKind::Expand => run_expand(cfg, &wf, &mut report)?,
        CommandKind::Bounds => run_bounds(cfg, &wf, &mut report)?,
        CommandKind::Estimate => run_estimate(cfg, &wf, &mut report)?,
        CommandKind::Loschmidt => run_loschmidt(cfg, &wf, &mut report)?,
        CommandKind::Verify => run_verify(cfg, &wf, &mut report)?,
        CommandKind::ImagEnergy => run_energy(cfg, &wf, &mut report)?,
        CommandKind::TraceZ => run_trace_z(cfg, &wf, &mut report)?,
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn run_expand(cfg: &RunConfig, wf: &WorkflowConfig, report: &mut RunReport) -> Result<(), CliError> {
    let h = hamiltonian(cfg)?;
    let time = any_time(cfg)?;
    let obs = match wf.mode {
        ExpansionMode::PropagatorOnly => None,
        _ => Some(observable(cfg, h.n_qubits())?),
    };
    let (plan, expansion) = expansion_with_plan(&h, obs.as_ref(), time, wf.mode, wf)?;
    report.bounds = Some(bound_report(&h, obs.as_ref(), time, &expansion, wf)?);
    report.plan = Some(plan);
    report.stats = Some(expansion.stats.clone());
    if cfg.emit_terms.unwrap_or(true) {
        report.terms = Some(expansion.sum.to_records());
    }
    Ok(())
}

/// A priori bounds only: term counts and `‖γ‖₁` come from their bounds, not from an expansion.
fn run_bounds(cfg: &RunConfig, wf: &WorkflowConfig, report: &mut RunReport) -> Result<(), CliError> {
    let h = hamiltonian(cfg)?;
    let time = any_time(cfg)?;
    let obs = match wf.mode {
        ExpansionMode::PropagatorOnly => None,
        _ => Some(observable(cfg, h.n_qubits())?),
    };
    let norm_o = obs.as_ref().map_or(1.0, ObservableSpec::norm_bound);
    let plan = resolve_plan(wf, h.lambda(), time, norm_o, wf.mode)?;
    let conjugated = wf.mode != ExpansionMode::PropagatorOnly;
    let observable_terms = obs.as_ref().map_or(1, |o| o.observable().len());
    let observable_l1 = obs.as_ref().map_or(1.0, |o| o.observable().l1_norm());
    let segments = plan.segments;
    let m_bound = term_count_bound(h.n_terms(), plan.order, segments, conjugated)
        .saturating_mul(if conjugated { observable_terms as u64 } else { 1 });
    let m_tot = usize::try_from(m_bound).unwrap_or(usize::MAX).max(1);
    let gamma = match wf.mode {
        ExpansionMode::Concat => gamma_l1_bound(h.lambda(), time.value(), plan.order, segments) * observable_l1,
        ExpansionMode::Direct | ExpansionMode::Commutator => {
            gamma_l1_bound(2.0 * h.lambda(), time.value(), plan.order, 1).sqrt() * observable_l1
        }
        ExpansionMode::PropagatorOnly => gamma_l1_bound(h.lambda(), time.value(), plan.order, segments).sqrt(),
    };
    let bounds = BoundReport::compute(BoundInputs {
        mode: wf.mode,
        time_kind: time.kind(),
        norm_h: h.lambda(),
        time: time.value(),
        order: plan.order,
        segments,
        n_terms: h.n_terms(),
        eps: wf.eps,
        sampling_eps: wf.sampling_eps,
        delta: wf.delta,
        norm_o,
        observable_terms,
        observable_l1,
        w_max: h.n_qubits(),
        m_tot,
        gamma_l1: gamma,
        m_non_identity: m_tot,
        gamma_l1_non_identity: gamma,
    })?;
    report.plan = Some(plan);
    report.bounds = Some(bounds);
    Ok(())
}

/// Estimate a sum on a state, either from the dense source or from recorded snapshots.
fn estimate_on(
    cfg: &RunConfig,
    wf: &WorkflowConfig,
    sum: &shortdyn_core::pauli::PauliSum,
    st: Option<&DenseState>,
) -> Result<EstimateReport, CliError> {
    let est_cfg = wf.estimation(wf.delta);
    if let Some(path) = &cfg.shadows {
        if !matches!(cfg.backend, None | Some(Method::Shadow)) {
            return Err(CliError::Input("--shadows requires the shadows backend".into()));
        }
        let snaps = load_shadows(path)?;
        let mut r = shadow_estimate_sum(&snaps, sum, wf.delta, &est_cfg)?;
        r.seed = wf.seed;
        return Ok(r);
    }
    let st = st.ok_or_else(|| CliError::Input("missing initial state: pass --state SPEC".into()))?;
    let src = ExactSource::new(st.clone());
    let shots = wf.resolve_shots(sum, wf.method, wf.delta)?;
    if wf.method == Method::Shadow {
        let snaps = draw_shadows_seeded(&src, shots, wf.seed, &est_cfg)?;
        if let Some(path) = &cfg.save_shadows {
            let file = std::fs::File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            write_shadows_jsonl(&snaps, std::io::BufWriter::new(file))?;
        }
        let mut r = shadow_estimate_sum(&snaps, sum, wf.delta, &est_cfg)?;
        r.seed = wf.seed;
        return Ok(r);
    }
    Ok(estimate_sum(sum, &src, wf.method, shots, wf.seed, &est_cfg)?)
}

fn state_or_shadows(cfg: &RunConfig, n: usize) -> Result<Option<DenseState>, CliError> {
    match (&cfg.state, &cfg.shadows) {
        (None, Some(_)) => Ok(None),
        _ => state(cfg, n).map(Some),
    }
}

fn run_estimate(cfg: &RunConfig, wf: &WorkflowConfig, report: &mut RunReport) -> Result<(), CliError> {
    let h = hamiltonian(cfg)?;
    let time = any_time(cfg)?;
    if wf.mode == ExpansionMode::PropagatorOnly {
        return Err(CliError::Input("estimate needs an observable mode; use `loschmidt` for the propagator".into()));
    }
    let obs = observable(cfg, h.n_qubits())?;
    let st = state_or_shadows(cfg, h.n_qubits())?;
    let (plan, expansion) = expansion_with_plan(&h, Some(&obs), time, wf.mode, wf)?;
    report.bounds = Some(bound_report(&h, Some(&obs), time, &expansion, wf)?);
    report.estimate = Some(estimate_on(cfg, wf, &expansion.sum, st.as_ref())?);
    if let Some(st) = &st {
        let exact = match time.kind() {
            TimeKind::Real => Some(exact_expectation(obs.observable(), &exact_evolve(&h, st, time)?)?),
            // e^{−τH} O e^{−τH} has no state-evolution counterpart without normalization.
            TimeKind::Imaginary => None,
        };
        report.reference = Some(Reference {
            truncated: Some(exact_expectation(&expansion.sum, st)?),
            exact,
        });
    }
    report.plan = Some(plan);
    report.stats = Some(expansion.stats);
    if cfg.emit_terms == Some(true) {
        report.terms = Some(expansion.sum.to_records());
    }
    Ok(())
}

fn run_loschmidt(cfg: &RunConfig, wf: &WorkflowConfig, report: &mut RunReport) -> Result<(), CliError> {
    let h = hamiltonian(cfg)?;
    let time = real_time(cfg)?;
    let st = state_or_shadows(cfg, h.n_qubits())?;
    let (plan, expansion) = expansion_with_plan(&h, None, time, ExpansionMode::PropagatorOnly, wf)?;
    report.bounds = Some(bound_report(&h, None, time, &expansion, wf)?);
    report.estimate = Some(estimate_on(cfg, wf, &expansion.sum, st.as_ref())?);
    if let Some(st) = &st {
        let u = hermitian_exp(&sum_to_matrix(&h.to_sum())?, time.generator());
        report.reference = Some(Reference {
            truncated: Some(exact_expectation(&expansion.sum, st)?),
            exact: Some((st.to_density() * u).trace()),
        });
    }
    report.plan = Some(plan);
    report.stats = Some(expansion.stats);
    if cfg.emit_terms == Some(true) {
        report.terms = Some(expansion.sum.to_records());
    }
    Ok(())
}

/// `PAULI=VALUE` replacement of one guess coefficient.
fn apply_perturbation(h: HamiltonianSpec, spec: &str) -> Result<HamiltonianSpec, CliError> {
    let (p, v) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--perturb expects PAULI=VALUE, got {spec:?}")))?;
    let pauli: PauliString = p.trim().parse()?;
    let value: f64 = v
        .trim()
        .parse()
        .map_err(|e| CliError::Input(format!("--perturb value {v:?}: {e}")))?;
    Ok(h.with_coefficient(&pauli, value)?)
}

fn run_verify(cfg: &RunConfig, wf: &WorkflowConfig, report: &mut RunReport) -> Result<(), CliError> {
    let h_sys = hamiltonian(cfg)?;
    let mut h_guess = match &cfg.guess {
        Some(path) => parse_hamiltonian(&read(path)?)?,
        None => h_sys.clone(),
    };
    if let Some(p) = &cfg.perturb {
        h_guess = apply_perturbation(h_guess, p)?;
    }
    let obs = observable(cfg, h_sys.n_qubits())?;
    let st = state(cfg, h_sys.n_qubits())?;
    let out = verify_hamiltonian_residual(&h_sys, &h_guess, &obs, real_time(cfg)?, &st, wf)?;
    report.plan = Some(out.plan);
    report.stats = Some(out.stats.clone());
    report.bounds = Some(out.bounds.clone());
    report.estimate = Some(out.estimate.clone());
    report.workflow = Some(Workflow::Verify(out));
    Ok(())
}

fn run_energy(cfg: &RunConfig, wf: &WorkflowConfig, report: &mut RunReport) -> Result<(), CliError> {
    let h = hamiltonian(cfg)?;
    let st = state(cfg, h.n_qubits())?;
    let tau = tau(cfg)?;
    let out = imaginary_time_energy(&h, &st, tau, wf)?;
    let cooled = exact_evolve(&h, &st, TimeParameter::imaginary(tau)?)?;
    report.reference = Some(Reference {
        truncated: None,
        exact: Some(exact_expectation(&h.to_sum(), &cooled)?),
    });
    report.plan = Some(out.plan);
    report.workflow = Some(Workflow::Energy(out));
    Ok(())
}

fn run_trace_z(cfg: &RunConfig, wf: &WorkflowConfig, report: &mut RunReport) -> Result<(), CliError> {
    let h = hamiltonian(cfg)?;
    let out = partition_trace(&h, tau(cfg)?, wf)?;
    report.stats = Some(out.stats.clone());
    report.workflow = Some(Workflow::Partition(out));
    Ok(())
}

fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6} {} {:.6}i", z.re, if z.im < 0.0 { '-' } else { '+' }, z.im.abs())
    }
}

/// Short human-readable account of a report.
pub fn summary(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "shortdyn {} {:?}", r.version, r.command);
    if let Some(p) = &r.plan {
        let _ = writeln!(s, "order K = {}, segments r = {}", p.order, p.segments);
    }
    if let Some(st) = &r.stats {
        let _ = writeln!(
            s,
            "terms m = {}, |gamma|_1 = {:.6}, max weight = {}",
            st.m_tot, st.gamma_l1, st.w_max
        );
    }
    if let Some(b) = &r.bounds {
        let _ = writeln!(
            s,
            "truncation bound {:.3e}, Hoeffding shots {}, shadow snapshots {}",
            b.total_systematic,
            b.shots_hoeffding,
            b.shots_shadow.map_or("-".into(), |n| n.to_string())
        );
    }
    if let Some(e) = &r.estimate {
        let _ = writeln!(
            s,
            "estimate {} +/- {:.3e} ({:?}, {} shots, confidence {:.2})",
            fmt_complex(e.estimate),
            e.confidence_radius,
            e.method,
            e.shots_used,
            e.confidence_level
        );
    }
    if let Some(rf) = &r.reference {
        if let Some(z) = rf.exact {
            let _ = writeln!(s, "exact {}", fmt_complex(z));
        }
    }
    match &r.workflow {
        Some(Workflow::Verify(v)) => {
            let _ = writeln!(
                s,
                "residual {:.6e}, radius {:.3e}: {}",
                v.residual,
                v.radius,
                if v.flagged { "MISMATCH" } else { "consistent" }
            );
        }
        Some(Workflow::Energy(e)) => {
            let _ = writeln!(s, "energy {:.6} +/- {:.3e}", e.energy, e.radius);
        }
        Some(Workflow::Partition(p)) => {
            let _ = writeln!(
                s,
                "Z ~ {:.6} +/- {:.3e}{}",
                p.estimate,
                p.systematic,
                p.exact.map_or(String::new(), |z| format!(" (exact {z:.6})"))
            );
        }
        None => {}
    }
    let _ = writeln!(s, "wall time {:.3} s", r.wall_time_s);
    s
}
