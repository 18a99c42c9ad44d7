#![allow(clippy::needless_range_loop)]

use ergobound::hitting;
use ergobound::verify::identities::{abel_suite, kac_suite, skeleton_suite, squared_return_suite};
use ergobound::verify::{random_chain, ChainRecipe, Construction};
use ergobound::{FiniteChain, StateSet};
use proptest::prelude::*;

fn chain_and_set() -> impl Strategy<Value = (FiniteChain, StateSet)> {
    (0usize..5, 2usize..=9, any::<u64>(), any::<u64>()).prop_map(|(c, n, s, pick)| {
        let chain = random_chain(&ChainRecipe::new(Construction::ALL[c], n, s));
        let mut members: Vec<usize> = (0..n).filter(|x| (pick >> x) & 1 == 1).collect();
        if members.is_empty() {
            members.push((pick as usize) % n);
        }
        if members.len() == n {
            members.pop();
        }
        (chain, StateSet::new(n, members).unwrap())
    })
}

fn factorial(l: usize) -> f64 {
    (1..=l).map(|k| k as f64).product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn return_law_sums_to_one((c, a) in chain_and_set()) {
        let horizon = hitting::adaptive_horizon(c.kernel(), &a).unwrap();
        let law = hitting::return_law(c.kernel(), &a, horizon);
        let tail = law.truncation_mass();
        for x in 0..c.n_states() {
            prop_assume!(tail[x] < 1e-12);
            let total: f64 = (1..=law.horizon()).map(|n| law.mass(n, x)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9, "x={x}: {total}");
        }
    }

    #[test]
    fn generating_derivative_is_mean((c, a) in chain_and_set()) {
        let h = 1e-6;
        let up = hitting::generating(c.kernel(), &a, 1.0 + h).unwrap().1;
        let down = hitting::generating(c.kernel(), &a, 1.0 - h).unwrap().1;
        let mean = hitting::return_mean(c.kernel(), &a).unwrap();
        for x in 0..c.n_states() {
            let d = (up[x] - down[x]) / (2.0 * h);
            prop_assert!((d - mean[x]).abs() <= 1e-4 * mean[x], "x={x}: {d} vs {}", mean[x]);
        }
    }

    #[test]
    fn sigma_moments_below_factorial_bound((c, a) in chain_and_set()) {
        let m = hitting::uniform_hitting_moment(c.kernel(), &a).unwrap();
        let moments = hitting::hitting_moments(c.kernel(), &a, 3).unwrap();
        for (i, ml) in moments.iter().enumerate() {
            let l = i + 1;
            let cap = factorial(l) * m.powi(l as i32);
            prop_assert!(ml.iter().all(|&v| v <= cap * (1.0 + 1e-12)), "order {l}");
        }
    }

    #[test]
    fn sigma_generating_is_one_on_set((c, a) in chain_and_set(), u in 0.0f64..1.0) {
        let rho = hitting::taboo_radius(c.kernel(), &a).unwrap();
        let top = if rho > 0.0 { 1.0 / rho } else { 3.0 };
        let lambda = 1.0 + u * 0.9 * (top - 1.0);
        let g = hitting::geometric_moments(c.kernel(), &a, lambda).unwrap();
        for x in 0..c.n_states() {
            prop_assert!(g.sigma_moment[x] >= 1.0 - 1e-15);
            if a.contains(x) {
                prop_assert_eq!(g.sigma_moment[x], 1.0);
            }
        }
    }

    #[test]
    fn abel_identity_to_hundred((c, a) in chain_and_set()) {
        let m = hitting::uniform_hitting_moment(c.kernel(), &a).unwrap();
        let law = hitting::return_law(c.kernel(), &a, 110);
        prop_assert!(hitting::abel_residual(&law, m, 100) <= 1e-9);
    }

    #[test]
    fn skeleton_series_nonnegative_and_complete((c, a) in chain_and_set()) {
        let (f0, f1) = hitting::even_odd_generating(c.kernel(), &a, 1.0).unwrap();
        for x in 0..c.n_states() {
            prop_assert!(f0[x] >= -1e-15 && f1[x] >= -1e-15);
            prop_assert!((f0[x] + f1[x] - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn seeded_identity_suites_pass() {
    for seed in [1, 2, 3] {
        for rep in [kac_suite(30, seed), abel_suite(30, seed), squared_return_suite(20, seed), skeleton_suite(30, seed)]
        {
            assert!(rep.complete(), "{rep:?}");
        }
    }
}

#[test]
fn two_state_moments() {
    let c = FiniteChain::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
    let a = StateSet::singleton(2, 1).unwrap();
    let m = hitting::uniform_hitting_moment(c.kernel(), &a).unwrap();
    assert!((m - 10.0 / 3.0).abs() < 1e-12);
    let g = hitting::geometric_moments(c.kernel(), &a, 1.1).unwrap();
    assert!((g.tau_moment[0] - 0.33 / 0.23).abs() < 1e-12);
    assert!((g.tau_moment[1] - 1.1 * (0.8 + 0.2 * 0.33 / 0.23)).abs() < 1e-12);
    assert!((g.l - 1.195652173913043).abs() < 1e-12);
}
