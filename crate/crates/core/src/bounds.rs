//! Truncation-error and sample-complexity bounds.
//!
//! All logarithms are natural. Shot counts are rounded up and saturate at
//! [`COUNT_SENTINEL`] instead of wrapping.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::{ExpansionMode, TimeKind};

/// Saturation value for counts that overflow `u64`.
pub const COUNT_SENTINEL: u64 = u64::MAX;

/// `Λ^{K+1}/(K+1)!`, the Taylor remainder bound for `e^{-iHt}` with `‖H‖t ≤ Λ`.
pub fn propagator_tail_bound(lambda: f64, order: usize) -> f64 {
    (1..=order + 1).fold(1.0, |acc, j| acc * lambda / j as f64)
}

/// Remainder bound for the real exponential `e^{-τH}`: the Lagrange form adds `e^Λ`.
pub fn imaginary_propagator_tail_bound(lambda: f64, order: usize) -> f64 {
    propagator_tail_bound(lambda, order) * lambda.exp()
}

/// `(2ε + ε²)‖O‖` for a unitary approximated to operator-norm error `ε`.
pub fn conjugation_error_bound(eps_u: f64, norm_o: f64) -> f64 {
    conjugation_error_bound_with_norm(eps_u, norm_o, 1.0)
}

/// `(2‖U‖ε + ε²)‖O‖`; reduces to [`conjugation_error_bound`] for unitary `U`.
pub fn conjugation_error_bound_with_norm(eps_u: f64, norm_o: f64, norm_u: f64) -> f64 {
    (2.0 * norm_u * eps_u + eps_u * eps_u) * norm_o
}

/// `‖O‖(2Λ)^{K+1}/(K+1)!`, the remainder of the order-`K` Taylor polynomial of `O(t)`.
pub fn direct_expansion_tail_bound(lambda: f64, order: usize, norm_o: f64) -> f64 {
    norm_o * propagator_tail_bound(2.0 * lambda, order)
}

/// Error of `Ũ^r` given per-factor error `eps` and per-factor norm bound `a`:
/// `(a + ε)^r − a^r` by telescoping.
pub fn segmented_error(eps: f64, segments: usize, factor_norm: f64) -> f64 {
    if eps == 0.0 {
        return 0.0;
    }
    let r = segments as f64;
    factor_norm.powf(r) * (r * (eps / factor_norm).ln_1p()).exp_m1()
}

/// Geometric per-side term bound `m = Σ_{k≤K} L^k`, raised to `r`, squared when conjugated.
pub fn term_count_bound(n_terms: usize, order: usize, segments: usize, conjugated: bool) -> u64 {
    let l = n_terms as u64;
    let mut m: u64 = 0;
    let mut power: u64 = 1;
    for k in 0..=order {
        m = m.saturating_add(power);
        if k < order {
            power = power.saturating_mul(l);
        }
    }
    let exponent = segments as u64 * if conjugated { 2 } else { 1 };
    let mut total: u64 = 1;
    for _ in 0..exponent {
        total = total.saturating_mul(m);
        if total == COUNT_SENTINEL {
            break;
        }
    }
    total
}

fn truncated_exp(x: f64, order: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=order {
        term *= x / k as f64;
        sum += term;
        if term == 0.0 || (term < f64::EPSILON * sum && k as f64 > x) {
            break;
        }
    }
    sum
}

/// `(Σ_{k≤K} (λt/r)^k/k!)^{2r}`: truncated exponential per factor, two factors
/// per segment, `r` segments.
pub fn gamma_l1_bound(lambda: f64, time: f64, order: usize, segments: usize) -> f64 {
    let r = segments.max(1);
    truncated_exp(lambda * time / r as f64, order).powi(2 * r as i32)
}

/// `⌈2‖γ‖₁² ln(2/δ)/ε²⌉` samples for additive error `ε` with probability `1 − δ`.
pub fn hoeffding_shots(gamma_l1: f64, eps: f64, delta: f64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    check_delta(delta)?;
    Ok(ceil_count(2.0 * gamma_l1 * gamma_l1 * (2.0 / delta).ln() / (eps * eps)))
}

/// `⌈2/(ε²(1−ε)) · 3^{w_max} · ln(3 m_tot/δ)⌉` local-shadow snapshots for
/// per-term additive error `ε`.
pub fn shadow_shots(w_max: usize, m_tot: usize, eps: f64, delta: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "shadow bound needs 0 < eps < 1, got {eps}"
        )));
    }
    check_delta(delta)?;
    if m_tot == 0 {
        return Err(Error::InvalidArgument("shadow bound needs m_tot >= 1".into()));
    }
    let n = 2.0 / (eps * eps * (1.0 - eps))
        * 3f64.powi(w_max as i32)
        * (3.0 * m_tot as f64 / delta).ln();
    Ok(ceil_count(n))
}

/// Smallest per-term error reachable with `snapshots` under [`shadow_shots`].
/// `None` when even the most favourable `ε` (2/3, where the bound is smallest)
/// needs more snapshots.
pub fn shadow_per_term_error(w_max: usize, m_tot: usize, snapshots: u64, delta: f64) -> Option<f64> {
    let needed = |eps: f64| {
        2.0 / (eps * eps * (1.0 - eps)) * 3f64.powi(w_max as i32) * (3.0 * m_tot.max(1) as f64 / delta).ln()
    };
    let best = 2.0 / 3.0;
    let n = snapshots as f64;
    if needed(best) > n {
        return None;
    }
    // needed() is decreasing on (0, 2/3].
    let (mut lo, mut hi) = (0.0_f64, best);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if needed(mid) > n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn ceil_count(x: f64) -> u64 {
    if !x.is_finite() || x >= u64::MAX as f64 {
        COUNT_SENTINEL
    } else {
        x.ceil().max(0.0) as u64
    }
}

/// Everything the report needs to evaluate the bounds for one expansion.
#[derive(Debug, Clone, Serialize)]
pub struct BoundInputs {
    pub mode: ExpansionMode,
    pub time_kind: TimeKind,
    /// Certified bound on `‖H‖` (λ unless overridden).
    pub norm_h: f64,
    pub time: f64,
    pub order: usize,
    pub segments: usize,
    pub n_terms: usize,
    /// Truncation target the order was chosen for.
    pub eps: f64,
    pub sampling_eps: f64,
    pub delta: f64,
    pub norm_o: f64,
    /// Number of Pauli terms in the observable (1 for propagator-only runs).
    pub observable_terms: usize,
    /// `Σ|c|` of the observable's coefficients.
    pub observable_l1: f64,
    pub w_max: usize,
    pub m_tot: usize,
    pub gamma_l1: f64,
    /// Number and ‖·‖₁ of the non-identity terms, used by the shadow bound.
    pub m_non_identity: usize,
    pub gamma_l1_non_identity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// `Λ = ‖H‖t/r`, the per-segment norm parameter.
    pub lambda_segment: f64,
    pub propagator_tail: f64,
    /// Error of the composed `r`-segment propagator.
    pub propagator_error: f64,
    pub total_systematic: f64,
    pub gamma_l1_bound: f64,
    pub term_count_bound: u64,
    pub shots_hoeffding: u64,
    /// `None` when the sum has no non-identity terms.
    pub shots_shadow: Option<u64>,
    pub inputs: BoundInputs,
}

impl BoundReport {
    pub fn compute(inputs: BoundInputs) -> Result<BoundReport> {
        let r = inputs.segments.max(1);
        let imaginary = inputs.time_kind == TimeKind::Imaginary;
        let lambda_total = inputs.norm_h * inputs.time;
        let lambda_segment = lambda_total / r as f64;
        let k = inputs.order;

        let propagator_tail = if imaginary {
            imaginary_propagator_tail_bound(lambda_segment, k)
        } else {
            propagator_tail_bound(lambda_segment, k)
        };
        let factor_norm = if imaginary { lambda_segment.exp() } else { 1.0 };
        let propagator_error = segmented_error(propagator_tail, r, factor_norm);
        let total_norm_u = if imaginary { lambda_total.exp() } else { 1.0 };

        let (total_systematic, gamma_bound, term_bound) = match inputs.mode {
            ExpansionMode::Concat => (
                conjugation_error_bound_with_norm(propagator_error, inputs.norm_o, total_norm_u),
                gamma_l1_bound(inputs.norm_h, inputs.time, k, r) * inputs.observable_l1,
                term_count_bound(inputs.n_terms, k, r, true)
                    .saturating_mul(inputs.observable_terms.max(1) as u64),
            ),
            ExpansionMode::Direct | ExpansionMode::Commutator => {
                let growth = if imaginary { (2.0 * lambda_total).exp() } else { 1.0 };
                (
                    direct_expansion_tail_bound(lambda_total, k, inputs.norm_o) * growth,
                    truncated_exp(2.0 * lambda_total, k) * inputs.observable_l1,
                    // Σ_{k+k'≤K} L^{k+k'} ≤ (Σ_{k≤K} L^k)^2
                    term_count_bound(inputs.n_terms, k, 1, true)
                        .saturating_mul(inputs.observable_terms.max(1) as u64),
                )
            }
            ExpansionMode::PropagatorOnly => (
                propagator_error,
                truncated_exp(lambda_segment, k).powi(r as i32),
                term_count_bound(inputs.n_terms, k, r, false),
            ),
        };

        let shots_hoeffding = hoeffding_shots(inputs.gamma_l1, inputs.sampling_eps, inputs.delta)?;
        let shots_shadow = if inputs.m_non_identity == 0 {
            None
        } else {
            // Per-term target ε/‖γ‖₁; beyond 2/3 the bound is no longer monotone, and a
            // tighter per-term target is always sufficient.
            let per_term = (inputs.sampling_eps / inputs.gamma_l1_non_identity).min(2.0 / 3.0);
            Some(shadow_shots(inputs.w_max, inputs.m_non_identity, per_term, inputs.delta)?)
        };

        Ok(BoundReport {
            lambda_segment,
            propagator_tail,
            propagator_error,
            total_systematic,
            gamma_l1_bound: gamma_bound,
            term_count_bound: term_bound,
            shots_hoeffding,
            shots_shadow,
            inputs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tail_examples() {
        assert_relative_eq!(propagator_tail_bound(1.0, 6), 1.0 / 5040.0, max_relative = 1e-14);
        assert_relative_eq!(propagator_tail_bound(0.5, 2), 0.125 / 6.0, max_relative = 1e-14);
        assert_eq!(propagator_tail_bound(0.0, 3), 0.0);
    }

    #[test]
    fn conjugation_examples() {
        assert_relative_eq!(conjugation_error_bound(0.01, 1.0), 0.0201, max_relative = 1e-14);
        assert_eq!(conjugation_error_bound(0.0, 3.0), 0.0);
        assert_relative_eq!(conjugation_error_bound(0.1, 2.0), 0.42, max_relative = 1e-14);
    }

    #[test]
    fn direct_examples() {
        assert_relative_eq!(direct_expansion_tail_bound(0.5, 2, 1.0), 1.0 / 6.0, max_relative = 1e-14);
        assert_eq!(direct_expansion_tail_bound(0.0, 4, 2.0), 0.0);
        for k in 0..8 {
            let ratio = direct_expansion_tail_bound(0.3, k, 1.0) / (3.0 * propagator_tail_bound(0.3, k));
            assert_relative_eq!(ratio, 2f64.powi(k as i32 + 1) / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn term_count_examples() {
        assert_eq!(term_count_bound(3, 2, 1, false), 13);
        assert_eq!(term_count_bound(3, 2, 1, true), 169);
        assert_eq!(term_count_bound(7, 0, 1, false), 1);
        assert_eq!(term_count_bound(1, 3, 2, false), 16);
        assert_eq!(term_count_bound(1000, 20, 5, true), COUNT_SENTINEL);
    }

    #[test]
    fn gamma_examples() {
        assert_relative_eq!(gamma_l1_bound(1.0, 0.1, 2, 1), 1.221025, max_relative = 1e-14);
        assert_eq!(gamma_l1_bound(3.0, 0.0, 4, 2), 1.0);
        assert_relative_eq!(gamma_l1_bound(1.0, 0.1, 64, 1), 0.2f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_shots(1.0, 0.1, 0.05).unwrap(), 738);
        assert_eq!(hoeffding_shots(2.0, 0.1, 0.05).unwrap(), 2952);
        assert_eq!(hoeffding_shots(0.0, 0.1, 0.05).unwrap(), 0);
        assert_eq!(hoeffding_shots(1.19, 0.1, 0.05).unwrap(), 1045);
        assert!(hoeffding_shots(1.0, 0.0, 0.05).is_err());
        assert!(hoeffding_shots(1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn shadow_examples() {
        assert_eq!(shadow_shots(2, 13, 0.1, 0.05).unwrap(), 13319);
        assert_eq!(shadow_shots(0, 1, 0.1, 0.05).unwrap(), 910);
        assert!(shadow_shots(1, 1, 1.0, 0.05).is_err());
        assert!(shadow_shots(1, 0, 0.1, 0.05).is_err());
    }

    #[test]
    fn shadow_inversion() {
        let n = shadow_shots(2, 13, 0.1, 0.05).unwrap();
        let eps = shadow_per_term_error(2, 13, n, 0.05).unwrap();
        assert!(eps <= 0.1 && eps > 0.0999, "{eps}");
        assert!(shadow_per_term_error(3, 10, 5, 0.05).is_none());
    }

    #[test]
    fn segmented_reduces_to_single() {
        assert_relative_eq!(segmented_error(1e-3, 1, 1.0), 1e-3, max_relative = 1e-12);
        assert!(segmented_error(1e-3, 4, 1.0) >= 4e-3);
        assert_relative_eq!(segmented_error(1e-3, 4, 1.0), 1.001f64.powi(4) - 1.0, max_relative = 1e-10);
    }
}
