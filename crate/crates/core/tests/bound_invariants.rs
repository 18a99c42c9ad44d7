use ergobound::bounds::{
    atomic_rate, evaluate, hitmoment_bound, reversible_atomic_rate, uniform_geometric_formula, uniform_geometric_gamma,
    BoundName, EvalOptions, Precondition,
};
use ergobound::verify::soundness::{admissible_construction, soundness_suite, SuiteConfig};
use ergobound::verify::{random_chain, ChainRecipe, Construction};
use ergobound::StateSet;
use proptest::prelude::*;

/// `(M, u)` with `lambda = 1 + u (e^{1/M} - 1)` strictly inside the window.
fn window_point() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..40.0, 0.01f64..0.99)
}

fn lambda_at(m: f64, u: f64) -> f64 {
    1.0 + u * ((1.0 / m).exp() - 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hitmoment_increasing_in_lambda((m, u) in window_point(), v in 0.0f64..1.0) {
        let l1 = lambda_at(m, u);
        let l2 = lambda_at(m, u + v * (0.99 - u));
        prop_assume!(l2 > l1);
        prop_assert!(hitmoment_bound(m, l2).unwrap() > hitmoment_bound(m, l1).unwrap());
    }

    #[test]
    fn hitmoment_increasing_in_m((m, u) in window_point(), grow in 1.0f64..1.5) {
        let lambda = lambda_at(m * grow, u);
        let a = hitmoment_bound(m, lambda).unwrap();
        let b = hitmoment_bound(m * grow, lambda).unwrap();
        prop_assert!(b >= a);
        let c = atomic_rate(m, 0.3, lambda).unwrap().constant("M1").unwrap();
        let d = atomic_rate(m * grow, 0.3, lambda).unwrap().constant("M1").unwrap();
        prop_assert!(d >= c);
    }

    #[test]
    fn atomic_constants_finite_and_curve_nonnegative((m, u) in window_point(), pi_a in 0.01f64..0.99) {
        let c = atomic_rate(m, pi_a, lambda_at(m, u)).unwrap();
        prop_assert!(c.constants.iter().all(|(_, v)| v.is_finite()));
        for n in 0..=200 {
            prop_assert!(c.eval(n) >= 0.0, "n={n}: {}", c.eval(n));
        }
    }

    #[test]
    fn uniform_geometric_sum_matches_formula(c in 0.05f64..50.0, rho in 0.01f64..0.99) {
        let (k, formula) = uniform_geometric_formula(c, rho);
        prop_assume!(k >= -1.0);
        let curve = uniform_geometric_gamma(c, rho).unwrap();
        let direct = curve.stationary_factor();
        prop_assert!((direct - formula).abs() <= 1e-9 * formula.max(1.0), "{direct} vs {formula}");
        prop_assert!(curve.warnings.is_empty());
    }

    #[test]
    fn reversible_atomic_branches_meet(m in 0.5f64..20.0, gap in 0.05f64..0.95, pi_a in 0.05f64..0.95) {
        let rho = 1.0 + gap * ((1.0 / m).exp() - 1.0);
        let at = reversible_atomic_rate(m, pi_a, rho, rho).unwrap();
        let near = reversible_atomic_rate(m, pi_a, rho, rho - 1e-6).unwrap();
        prop_assert!(at.constant("J1").is_some() && near.constant("F1").is_some());
        for n in 0..=50 {
            let (a, b) = (at.eval(n), near.eval(n));
            prop_assert!((a - b).abs() <= 1e-3 * a.abs().max(b.abs()), "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn reversible_families_reject_nonreversible_chains(n in 3usize..=8, seed in any::<u64>()) {
        let c = random_chain(&ChainRecipe::new(Construction::RandomGeneral, n, seed));
        prop_assume!(!c.check_reversible(1e-10).reversible);
        let a = StateSet::singleton(n, 0).unwrap();
        for name in [BoundName::Atomic, BoundName::NonAtomic, BoundName::ReversibleAtomic, BoundName::ReversibleNonAtomic] {
            let e = evaluate(name, &c, &a, &EvalOptions::default());
            prop_assert!(matches!(e, Err(Precondition::NotReversible { .. })), "{name}: {e:?}");
        }
    }

    #[test]
    fn feasible_curves_have_monotone_kernel_factors(c in 0usize..5, n in 2usize..=8, seed in any::<u64>()) {
        let chain = random_chain(&ChainRecipe::new(Construction::ALL[c], n, seed));
        let a = StateSet::singleton(n, 0).unwrap();
        for name in BoundName::ALL {
            let Ok(e) = evaluate(name, &chain, &a, &EvalOptions::default()) else { continue };
            for curve in e.curves() {
                prop_assert!(curve.constants.iter().all(|(_, v)| v.is_finite()), "{name}: {:?}", curve.constants);
                let mut last: f64 = 0.0;
                for k in 0..=100 {
                    let g = curve.kernel_factor(k);
                    // a and b of a two-rate curve can nearly cancel
                    prop_assert!(g >= last - 1e-9 * last.max(1.0), "{name} n={k}: {g} < {last} {:?}", curve.form);
                    last = g;
                }
                prop_assert!(last <= curve.stationary_factor() * (1.0 + 1e-9) + 1e-9, "{name}");
            }
        }
    }
}

#[test]
fn sweeps_are_deterministic() {
    for b in [BoundName::Atomic, BoundName::General, BoundName::GammaSeries] {
        let cfg = SuiteConfig::new(b, admissible_construction(b), 8, 99);
        let first = soundness_suite(&cfg);
        assert_eq!(first, soundness_suite(&cfg));
        assert!(first.passed());
    }
}

#[test]
fn empty_windows_are_named() {
    // a periodic pair has no contraction and no aperiodic rate
    let c = ergobound::FiniteChain::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let a = StateSet::singleton(2, 0).unwrap();
    let e = evaluate(BoundName::Dobrushin, &c, &a, &EvalOptions::default()).unwrap();
    assert!(!e.is_feasible());
    assert!(e.first_infeasibility().is_some());
}
