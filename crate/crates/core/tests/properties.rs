use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use shortdyn_core::bounds::{
    gamma_l1_bound, hoeffding_shots, propagator_tail_bound, shadow_shots, term_count_bound,
};
use shortdyn_core::estimation::{build_sampling_distribution, Basis, ShadowSnapshot};
use shortdyn_core::model::{parse_hamiltonian, HamiltonianSpec};
use shortdyn_core::pauli::{PauliLetter, PauliString, PauliSum};
use shortdyn_core::expansion::TimeParameter;
use shortdyn_core::reference::{basis_distribution, exact_evolve, pauli_expectation, pauli_matrix, sum_to_matrix, DenseState};

const LETTERS: [PauliLetter; 4] = [PauliLetter::I, PauliLetter::X, PauliLetter::Y, PauliLetter::Z];

fn pauli(n: usize) -> impl Strategy<Value = PauliString> {
    prop::collection::vec(0..4usize, n).prop_map(|v| PauliString::from_letters(&v.iter().map(|&i| LETTERS[i]).collect::<Vec<_>>()))
}

fn coeff() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

fn sum(n: usize) -> impl Strategy<Value = PauliSum> {
    prop::collection::vec((coeff(), pauli(n)), 1..6)
        .prop_map(move |terms| PauliSum::from_terms(n, terms).unwrap())
}

fn real_sum(n: usize) -> impl Strategy<Value = PauliSum> {
    prop::collection::vec((-1.0..1.0f64, pauli(n)), 1..6).prop_map(move |terms| {
        PauliSum::from_terms(n, terms.into_iter().map(|(c, p)| (Complex64::new(c, 0.0), p))).unwrap()
    })
}

fn state(n: usize) -> impl Strategy<Value = DenseState> {
    let dim = 1usize << n;
    (prop::collection::vec(coeff(), dim), prop::collection::vec(coeff(), dim), 0.0..1.0f64, any::<bool>()).prop_map(
        move |(a, b, w, mixed)| {
            let unit = |v: Vec<Complex64>| {
                let v = DVector::from_vec(v);
                let norm = v.norm().max(1e-9);
                v / Complex64::new(norm, 0.0)
            };
            let (a, b) = (unit(a), unit(b));
            if mixed {
                let rho = &a * a.adjoint() * Complex64::new(w, 0.0) + &b * b.adjoint() * Complex64::new(1.0 - w, 0.0);
                let tr = rho.trace();
                DenseState::from_density(rho / tr).unwrap()
            } else {
                DenseState::from_vector(a).unwrap()
            }
        },
    )
}

fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn product_matches_dense((a, b) in (1..=3usize).prop_flat_map(|n| (pauli(n), pauli(n)))) {
        let (phase, c) = a.multiply(&b).unwrap();
        let dense = pauli_matrix(&a).unwrap() * pauli_matrix(&b).unwrap();
        let symbolic = pauli_matrix(&c).unwrap() * phase.to_complex();
        prop_assert!(max_diff(&dense, &symbolic) < 1e-12);
    }

    #[test]
    fn group_laws(a in pauli(5), b in pauli(5), c in pauli(5)) {
        let id = PauliString::identity(5);
        prop_assert_eq!(a.multiply(&id).unwrap(), (shortdyn_core::pauli::Phase::ONE, a.clone()));
        prop_assert_eq!(a.multiply(&a).unwrap(), (shortdyn_core::pauli::Phase::ONE, id));
        let (p1, ab) = a.multiply(&b).unwrap();
        let (p2, ab_c) = ab.multiply(&c).unwrap();
        let (p3, bc) = b.multiply(&c).unwrap();
        let (p4, a_bc) = a.multiply(&bc).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);
        prop_assert_eq!(p1 + p2, p3 + p4);
        let (q1, ba) = b.multiply(&a).unwrap();
        prop_assert_eq!(&ab, &ba);
        let anti = a.anticommutes_with(&b).unwrap();
        prop_assert_eq!(q1.exponent(), if anti { (p1.exponent() + 2) % 4 } else { p1.exponent() });
    }

    #[test]
    fn commutator_iff_odd_symplectic_form(a in pauli(3), b in pauli(3)) {
        let form: usize = a.letters().zip(b.letters()).map(|(x, y)| {
            let ((x1, z1), (x2, z2)) = (x.bits(), y.bits());
            usize::from(x1 && z2) + usize::from(z1 && x2)
        }).sum();
        let comm = shortdyn_core::pauli::commutator(&a, &b).unwrap();
        prop_assert_eq!(comm.is_empty(), form % 2 == 0);
        let ma = pauli_matrix(&a).unwrap();
        let mb = pauli_matrix(&b).unwrap();
        let dense = &ma * &mb - &mb * &ma;
        prop_assert!(max_diff(&dense, &sum_to_matrix(&comm).unwrap()) < 1e-12);
    }

    #[test]
    fn sums_are_an_algebra_homomorphism(a in sum(3), b in sum(3)) {
        let (ma, mb) = (sum_to_matrix(&a).unwrap(), sum_to_matrix(&b).unwrap());
        prop_assert!(max_diff(&sum_to_matrix(&a.multiply(&b).unwrap()).unwrap(), &(&ma * &mb)) < 1e-12);
        prop_assert!(max_diff(&sum_to_matrix(&a.add(&b).unwrap()).unwrap(), &(&ma + &mb)) < 1e-12);
        prop_assert!(max_diff(&sum_to_matrix(&a.adjoint()).unwrap(), &ma.adjoint()) < 1e-12);
        prop_assert!(max_diff(&sum_to_matrix(&a.commutator(&b).unwrap()).unwrap(), &(&ma * &mb - &mb * &ma)) < 1e-12);
    }

    #[test]
    fn trace_identity(a in sum(3)) {
        let tr = sum_to_matrix(&a).unwrap().trace();
        prop_assert!((tr - a.identity_coefficient() * 8.0).norm() < 1e-12);
    }

    #[test]
    fn canonicalize_is_idempotent(a in sum(4)) {
        let once = a.canonicalize(1e-3).unwrap();
        prop_assert_eq!(once.canonicalize(1e-3).unwrap(), once.clone());
        prop_assert!(once.iter().all(|(_, c)| c.norm() >= 1e-3));
    }

    #[test]
    fn pauli_text_round_trip(p in pauli(150)) {
        prop_assert_eq!(p.to_string().parse::<PauliString>().unwrap(), p);
    }

    #[test]
    fn hamiltonian_text_round_trip(terms in prop::collection::vec((-3.0..3.0f64, pauli(4)), 1..8)) {
        let terms: Vec<_> = terms.into_iter().filter(|(c, p)| *c != 0.0 && !p.is_identity()).collect();
        prop_assume!(!terms.is_empty());
        let h = HamiltonianSpec::from_terms(4, terms).unwrap();
        prop_assert_eq!(parse_hamiltonian(&h.to_text()).unwrap(), h);
    }

    #[test]
    fn tail_bound_monotone(l1 in 0.0..1.0f64, l2 in 0.0..1.0f64, k in 0..20usize) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        prop_assert!(propagator_tail_bound(lo, k) <= propagator_tail_bound(hi, k));
        prop_assert!(propagator_tail_bound(hi, k + 1) <= propagator_tail_bound(hi, k));
        prop_assert!(gamma_l1_bound(lo, 1.0, k, 1) <= gamma_l1_bound(hi, 1.0, k, 1));
    }

    #[test]
    fn shot_bounds_monotone(g in 0.1..10.0f64, e1 in 0.01..0.6f64, e2 in 0.01..0.6f64, w in 0..6usize, m in 1..1000usize) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(hoeffding_shots(g, hi, 0.05).unwrap() <= hoeffding_shots(g, lo, 0.05).unwrap());
        prop_assert!(hoeffding_shots(g, lo, 0.05).unwrap() <= hoeffding_shots(2.0 * g, lo, 0.05).unwrap());
        prop_assert!(shadow_shots(w, m, hi, 0.05).unwrap() <= shadow_shots(w, m, lo, 0.05).unwrap());
        prop_assert!(shadow_shots(w, m, lo, 0.05).unwrap() <= shadow_shots(w + 1, m, lo, 0.05).unwrap());
        prop_assert!(shadow_shots(w, m, lo, 0.05).unwrap() <= shadow_shots(w, m + 1, lo, 0.05).unwrap());
    }

    #[test]
    fn term_count_bound_monotone(l in 1..20usize, k in 0..8usize, r in 1..4usize) {
        prop_assert!(term_count_bound(l, k, r, false) <= term_count_bound(l, k + 1, r, false));
        prop_assert!(term_count_bound(l, k, r, false) <= term_count_bound(l, k, r, true));
        prop_assert!(term_count_bound(l, k, r, false) <= term_count_bound(l + 1, k, r, false));
    }

    #[test]
    fn sampling_distribution_normalized(s in real_sum(3)) {
        prop_assume!(!s.is_empty());
        let d = build_sampling_distribution(&s).unwrap();
        prop_assert!((d.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.probabilities().iter().all(|&p| p > 0.0));
        prop_assert!((d.gamma_l1() - s.l1_norm()).abs() < 1e-12);
    }

    /// Expected single-draw importance value equals the exact expectation.
    #[test]
    fn importance_estimator_unbiased(s in real_sum(3), rho in state(3)) {
        prop_assume!(!s.is_empty());
        let d = build_sampling_distribution(&s).unwrap();
        let mean: f64 = d.strings().iter().enumerate().map(|(i, q)| {
            d.probabilities()[i] * d.gamma_l1() * f64::from(d.signs()[i]) * pauli_expectation(q, &rho).unwrap().re
        }).sum();
        let exact: f64 = s.iter().map(|(q, c)| c.re * pauli_expectation(q, &rho).unwrap().re).sum();
        prop_assert!((mean - exact).abs() < 1e-12);
    }

    /// Averaging the single-snapshot estimator over all bases and outcomes with their
    /// exact probabilities reproduces tr(qρ).
    #[test]
    fn shadow_estimator_unbiased(q in pauli(3), rho in state(3)) {
        let n = 3;
        let mut mean = 0.0;
        for code in 0..27usize {
            let bases: Vec<Basis> = (0..n).map(|j| [Basis::X, Basis::Y, Basis::Z][(code / 3usize.pow(j as u32)) % 3]).collect();
            let probs = basis_distribution(&rho, &bases).unwrap();
            for (index, p) in probs.iter().enumerate() {
                let bits = (0..n).map(|j| (index >> (n - 1 - j)) & 1 == 1).collect();
                mean += p / 27.0 * ShadowSnapshot::new(bases.clone(), bits).estimator(&q).unwrap();
            }
        }
        let exact = pauli_expectation(&q, &rho).unwrap();
        prop_assert!(exact.im.abs() < 1e-12);
        prop_assert!((mean - exact.re).abs() < 1e-10);
    }

    #[test]
    fn evolution_preserves_normalization(
        terms in prop::collection::vec((-1.0..1.0f64, pauli(3)), 1..5),
        rho in state(3),
        t in 0.0..2.0f64,
        imaginary in any::<bool>(),
    ) {
        let terms: Vec<_> = terms.into_iter().filter(|(c, p)| *c != 0.0 && !p.is_identity()).collect();
        prop_assume!(!terms.is_empty());
        let h = HamiltonianSpec::from_terms(3, terms).unwrap();
        let time = if imaginary { TimeParameter::imaginary(t) } else { TimeParameter::real(t) }.unwrap();
        let out = exact_evolve(&h, &rho, time).unwrap();
        prop_assert!((out.trace_norm() - 1.0).abs() < 1e-10);
    }
}
