//! Bounds evaluated from a chain and a target set.
//!
//! Each bound family gets its exact inputs from the chain (`M`, `pi(A)`,
//! the minorization certificate, the skeleton radius, the even-return
//! mass, Dobrushin coefficients) after its structural preconditions are
//! checked. A chain that fails a precondition gets a [`Precondition`]
//! rejection and no numbers.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::formulas::{self, GeneralBound};
use super::window::{self, LambdaWindow, GRID_MARGIN, GRID_POINTS};
use super::{BoundCurve, BoundName, GammaTail, Infeasibility, Warning};
use crate::chain::{FiniteChain, Kernel, StateSet};
use crate::error::{ChainError, MomentError};
use crate::hitting;
use crate::splitting::{CertificateError, MinorizationCertificate};
use crate::tol;

/// A structural requirement of a bound that the chain does not meet.
#[derive(Debug, Clone, PartialEq)]
pub enum Precondition {
    /// `A = X`.
    FullSet,
    NotReversible {
        residual: f64,
    },
    NotNonnegDefinite {
        min_eigenvalue: f64,
    },
    NotAtom,
    NoCertificate(CertificateError),
    /// The supplied certificate is for a different set.
    CertificateSet,
    Moment(MomentError),
    Chain(ChainError),
}

impl fmt::Display for Precondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precondition::FullSet => write!(f, "target set is the whole state space"),
            Precondition::NotReversible { residual } => {
                write!(f, "chain is not reversible (detailed-balance residual {residual})")
            }
            Precondition::NotNonnegDefinite { min_eigenvalue } => {
                write!(f, "chain is not non-negative definite (smallest eigenvalue {min_eigenvalue})")
            }
            Precondition::NotAtom => write!(f, "target set is not an atom"),
            Precondition::NoCertificate(e) => write!(f, "no minorization certificate: {e}"),
            Precondition::CertificateSet => write!(f, "certificate set differs from the target set"),
            Precondition::Moment(e) => write!(f, "{e}"),
            Precondition::Chain(e) => write!(f, "{e}"),
        }
    }
}

impl From<MomentError> for Precondition {
    fn from(e: MomentError) -> Self {
        match e {
            MomentError::FullSet => Precondition::FullSet,
            e => Precondition::Moment(e),
        }
    }
}

impl From<ChainError> for Precondition {
    fn from(e: ChainError) -> Self {
        Precondition::Chain(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSpec {
    /// Geometric grid strictly inside the window.
    Grid {
        points: usize,
        margin: f64,
    },
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub lambda: LambdaSpec,
    /// Replaces the maximal one-step certificate on `A`.
    pub certificate: Option<MinorizationCertificate>,
    /// Largest `N` searched for a Dobrushin coefficient of `P^N`.
    pub max_steps: usize,
    /// Length of the exact head used by the gamma-series bound.
    pub horizon: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            lambda: LambdaSpec::Grid { points: GRID_POINTS, margin: GRID_MARGIN },
            certificate: None,
            max_steps: 64,
            horizon: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Curve(BoundCurve),
    /// `sup_x E_x[lambda^{tau_A}]` bound and its exact value.
    HitMoment {
        m_bound: f64,
        exact_sup: Option<f64>,
    },
    General(GeneralBound),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub lambda: Option<f64>,
    pub outcome: Result<Outcome, Infeasibility>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub name: BoundName,
    /// Exact chain quantities the bound consumed.
    pub inputs: Vec<(&'static str, f64)>,
    pub window: Option<LambdaWindow>,
    pub points: Vec<Point>,
    pub warnings: Vec<Warning>,
}

impl Evaluation {
    pub fn input(&self, name: &str) -> Option<f64> {
        self.inputs.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn is_feasible(&self) -> bool {
        self.points.iter().any(|p| p.outcome.is_ok())
    }

    pub fn first_infeasibility(&self) -> Option<&Infeasibility> {
        self.points.iter().find_map(|p| p.outcome.as_ref().err())
    }

    pub fn curves(&self) -> impl Iterator<Item = &BoundCurve> {
        self.points.iter().filter_map(|p| match &p.outcome {
            Ok(Outcome::Curve(c)) => Some(c),
            _ => None,
        })
    }

    /// Pointwise minimum over the feasible curves.
    pub fn envelope(&self, n_max: usize) -> Option<Vec<f64>> {
        let curves: Vec<BoundCurve> = self.curves().cloned().collect();
        (!curves.is_empty()).then(|| window::envelope(&curves, n_max))
    }

    /// Best stationary-law bound at `dp` over the feasible points.
    pub fn stationary_bound(&self, dp: f64) -> Option<f64> {
        self.points
            .iter()
            .filter_map(|p| match &p.outcome {
                Ok(Outcome::Curve(c)) => c.stationary_bound(dp),
                Ok(Outcome::General(g)) => g.bound(dp).ok(),
                _ => None,
            })
            .reduce(f64::min)
    }

    /// Best kernel bound `||P~^n - P^n||` at `dp` over the feasible curves.
    pub fn kernel_bound(&self, n: usize, dp: f64) -> Option<f64> {
        self.curves().map(|c| c.kernel_bound(n, dp)).reduce(f64::min)
    }

    /// Largest `dP` for which some point gives a stationary bound;
    /// infinite for the rate-curve families.
    pub fn validity_threshold(&self) -> Option<f64> {
        self.points
            .iter()
            .filter_map(|p| match &p.outcome {
                Ok(Outcome::Curve(c)) => c.stationary_factor().is_finite().then_some(f64::INFINITY),
                Ok(Outcome::General(g)) => Some(g.threshold),
                _ => None,
            })
            .reduce(f64::max)
    }
}

/// The Dobrushin coefficient of `P^N` for the `N <= max_steps` minimizing
/// `2N / (1 - delta_N)`, or `None` if no power contracts.
pub fn best_dobrushin(chain: &FiniteChain, max_steps: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for steps in 1..=max_steps.max(1) {
        if let Some((_, _, factor)) = best {
            if 2.0 * steps as f64 >= factor {
                break;
            }
        }
        let d = chain.dobrushin_coefficient(steps);
        if d < 1.0 {
            let factor = 2.0 * steps as f64 / (1.0 - d);
            if best.is_none_or(|(_, _, f)| factor < f) {
                best = Some((steps, d, factor));
            }
        }
    }
    best.map(|(s, d, _)| (s, d))
}

const DELTA_FLOOR: f64 = 1e-12;

/// Geometric tail `gamma_{H+1+j} <= gamma_H d^{(2-N)/N} (d^{1/N})^j` from
/// `delta(P^N) = d`, with the `N` giving the smallest tail sum.
fn certified_tail(chain: &FiniteChain, last: f64, max_steps: usize) -> GammaTail {
    let mut best: Option<(f64, f64, f64)> = None;
    for steps in 1..=max_steps.max(1) {
        let d = chain.dobrushin_coefficient(steps);
        if !(d < 1.0) {
            continue;
        }
        let d = d.max(DELTA_FLOOR);
        let n = steps as f64;
        let c = last * libm::pow(d, (2.0 - n) / n);
        let rho = libm::pow(d, 1.0 / n);
        if !(rho < 1.0) {
            continue;
        }
        let total = c / (1.0 - rho);
        if best.is_none_or(|(_, _, t)| total < t) {
            best = Some((c, rho, total));
        }
    }
    match best {
        Some((c, rho, _)) => GammaTail::Geometric { c, rho },
        None => GammaTail::Constant(last),
    }
}

/// `sup{s < e^{1/M} : sup_{x in A} F0(s) < 1}`, also capped by the taboo
/// radius so every evaluation is a convergent series.
pub fn skeleton_radius(kernel: &Kernel, set: &StateSet, m: f64) -> Result<f64, MomentError> {
    let rho = hitting::taboo_radius(kernel, set)?;
    let mut upper = libm::exp(1.0 / m);
    if rho > 0.0 {
        upper = upper.min(1.0 / rho);
    }
    let even = |s: f64| {
        hitting::even_odd_with_radius(kernel, set, s, rho)
            .map(|(e, _)| set.members().iter().map(|&x| e[x]).fold(f64::NEG_INFINITY, f64::max))
    };
    Ok(window::bisect_upper(1.0, upper, |s| matches!(even(s), Ok(v) if v < 1.0)))
}

fn require_reversible(chain: &FiniteChain) -> Result<(), Precondition> {
    let rev = chain.check_reversible(tol::STRUCTURAL);
    if rev.reversible {
        Ok(())
    } else {
        Err(Precondition::NotReversible { residual: rev.residual })
    }
}

fn require_nonneg(chain: &FiniteChain) -> Result<(), Precondition> {
    match chain.check_nonneg_definite(tol::SPECTRAL) {
        crate::chain::Definiteness::NonNegative { .. } => Ok(()),
        crate::chain::Definiteness::Indefinite { min_eigenvalue } => {
            Err(Precondition::NotNonnegDefinite { min_eigenvalue })
        }
        crate::chain::Definiteness::NotApplicable { reversibility_residual } => {
            Err(Precondition::NotReversible { residual: reversibility_residual })
        }
    }
}

fn require_atom(chain: &FiniteChain, set: &StateSet) -> Result<(), Precondition> {
    if chain.is_atom(set, tol::STRUCTURAL) {
        Ok(())
    } else {
        Err(Precondition::NotAtom)
    }
}

fn certificate(
    chain: &FiniteChain,
    set: &StateSet,
    opts: &EvalOptions,
) -> Result<MinorizationCertificate, Precondition> {
    match &opts.certificate {
        Some(c) if c.set() != set => Err(Precondition::CertificateSet),
        Some(c) => {
            c.check(chain.kernel()).map_err(Precondition::NoCertificate)?;
            Ok(c.clone())
        }
        None => chain.find_minorization(set).map_err(Precondition::NoCertificate),
    }
}

fn lambdas(window: &LambdaWindow, spec: &LambdaSpec) -> Vec<f64> {
    match spec {
        LambdaSpec::Grid { points, margin } => window::lambda_grid(window, *points, *margin),
        LambdaSpec::Values(v) => v.clone(),
    }
}

fn without_lambda(
    name: BoundName,
    inputs: Vec<(&'static str, f64)>,
    outcome: Result<BoundCurve, Infeasibility>,
) -> Evaluation {
    let warnings = outcome.as_ref().map(|c| c.warnings.clone()).unwrap_or_default();
    Evaluation {
        name,
        inputs,
        window: None,
        points: vec![Point { lambda: None, outcome: outcome.map(Outcome::Curve) }],
        warnings,
    }
}

fn over_window<F>(
    name: BoundName,
    inputs: Vec<(&'static str, f64)>,
    window: LambdaWindow,
    opts: &EvalOptions,
    mut at: F,
) -> Evaluation
where
    F: FnMut(f64) -> Result<Outcome, Infeasibility>,
{
    let grid = lambdas(&window, &opts.lambda);
    let points: Vec<Point> = if grid.is_empty() {
        vec![Point {
            lambda: None,
            outcome: Err(Infeasibility::EmptyWindow { binding: window.binding, upper: window.upper }),
        }]
    } else {
        grid.into_iter().map(|l| Point { lambda: Some(l), outcome: at(l) }).collect()
    };
    let mut warnings = Vec::new();
    for p in &points {
        if let Ok(Outcome::Curve(c)) = &p.outcome {
            for w in &c.warnings {
                if !warnings.contains(w) {
                    warnings.push(w.clone());
                }
            }
        }
    }
    Evaluation { name, inputs, window: Some(window), points, warnings }
}

/// Evaluates bound `name` on `chain` with target set `set`.
pub fn evaluate(
    name: BoundName,
    chain: &FiniteChain,
    set: &StateSet,
    opts: &EvalOptions,
) -> Result<Evaluation, Precondition> {
    if set.n_states() != chain.n_states() {
        return Err(Precondition::Chain(ChainError::StateOutOfRange {
            state: set.n_states(),
            n_states: chain.n_states(),
        }));
    }
    let kernel = chain.kernel();
    match name {
        BoundName::GammaSeries => {
            let head = chain.tv_profile(opts.horizon);
            let last = *head.last().expect("nonempty profile");
            let tail = certified_tail(chain, last, opts.max_steps);
            let inputs = vec![("horizon", opts.horizon as f64), ("gamma_horizon", last)];
            Ok(without_lambda(name, inputs, formulas::gamma_series_bounds(head, tail)))
        }
        BoundName::UniformGeometric => {
            let rev = chain.check_reversible(tol::STRUCTURAL);
            let (c, rho, inputs) = if rev.reversible {
                let r0 = chain.spectral_r0()?.r0;
                let pi_min = chain.stationary().min();
                let c = libm::sqrt((1.0 / pi_min - 1.0).max(0.0));
                (c, r0, vec![("pi_min", pi_min), ("r0", r0)])
            } else {
                match best_dobrushin(chain, opts.max_steps) {
                    Some((steps, d)) => {
                        let d = d.max(DELTA_FLOOR);
                        let n = steps as f64;
                        (2.0 * libm::pow(d, -(n - 1.0) / n), libm::pow(d, 1.0 / n), vec![("N", n), ("dobrushin", d)])
                    }
                    None => {
                        let d = chain.dobrushin_coefficient(1);
                        return Ok(without_lambda(
                            name,
                            vec![("dobrushin", d)],
                            Err(Infeasibility::NoContraction { delta: d }),
                        ));
                    }
                }
            };
            let outcome = if rho >= 1.0 {
                Err(Infeasibility::NoContraction { delta: rho })
            } else {
                formulas::uniform_geometric_gamma(c, rho)
            };
            Ok(without_lambda(name, inputs, outcome))
        }
        BoundName::Dobrushin => match best_dobrushin(chain, opts.max_steps) {
            Some((steps, d)) => Ok(without_lambda(
                name,
                vec![("N", steps as f64), ("dobrushin", d)],
                formulas::dobrushin_bound(d, steps),
            )),
            None => {
                let d = chain.dobrushin_coefficient(opts.max_steps.max(1));
                Ok(without_lambda(
                    name,
                    vec![("N", opts.max_steps.max(1) as f64), ("dobrushin", d)],
                    Err(Infeasibility::NoContraction { delta: d }),
                ))
            }
        },
        _ => evaluate_moment_bound(name, chain, kernel, set, opts),
    }
}

fn evaluate_moment_bound(
    name: BoundName,
    chain: &FiniteChain,
    kernel: &Kernel,
    set: &StateSet,
    opts: &EvalOptions,
) -> Result<Evaluation, Precondition> {
    if set.is_full() {
        return Err(Precondition::FullSet);
    }
    match name {
        BoundName::Atomic => {
            require_reversible(chain)?;
            require_nonneg(chain)?;
            require_atom(chain, set)?;
        }
        BoundName::NonAtomic => {
            require_reversible(chain)?;
            require_nonneg(chain)?;
        }
        BoundName::ReversibleAtomic => {
            require_reversible(chain)?;
            require_atom(chain, set)?;
        }
        BoundName::ReversibleNonAtomic => require_reversible(chain)?,
        _ => {}
    }
    let m = hitting::uniform_hitting_moment(kernel, set)?;
    let pi_a = chain.stationary().mass(set);
    let mut inputs = vec![("M", m), ("pi(A)", pi_a)];
    let hit = match window::hit_window(m) {
        Ok(w) => w,
        Err(e) => {
            return Ok(Evaluation {
                name,
                inputs,
                window: None,
                points: vec![Point { lambda: None, outcome: Err(e) }],
                warnings: Vec::new(),
            })
        }
    };
    match name {
        BoundName::HitMoment => Ok(over_window(name, inputs, hit, opts, |l| {
            let m_bound = formulas::hitmoment_bound(m, l)?;
            let exact_sup = hitting::geometric_moments(kernel, set, l).ok().map(|g| g.sup_tau);
            Ok(Outcome::HitMoment { m_bound, exact_sup })
        })),
        BoundName::General => {
            Ok(over_window(name, inputs, hit, opts, |l| GeneralBound::new(m, l).map(Outcome::General)))
        }
        BoundName::Atomic => {
            Ok(over_window(name, inputs, hit, opts, |l| formulas::atomic_rate(m, pi_a, l).map(Outcome::Curve)))
        }
        BoundName::ReversibleAtomic => {
            let radius = skeleton_radius(kernel, set, m)?;
            inputs.push(("skeleton_radius", radius));
            Ok(over_window(name, inputs, hit, opts, |l| {
                formulas::reversible_atomic_rate(m, pi_a, radius, l).map(Outcome::Curve)
            }))
        }
        BoundName::NonAtomic => {
            let cert = certificate(chain, set, opts)?;
            let delta = cert.delta();
            inputs.push(("delta", delta));
            inputs.push(("split_quadratic_root", formulas::split_quadratic_root(m, delta)));
            let w = window::nonatomic_window(m, delta).expect("positive M");
            Ok(over_window(name, inputs, w, opts, |l| formulas::nonatomic_rate(m, delta, pi_a, l).map(Outcome::Curve)))
        }
        BoundName::ReversibleNonAtomic => {
            let cert = certificate(chain, set, opts)?;
            let (delta, nu_a) = (cert.delta(), cert.nu_mass());
            let dbar = delta * delta * nu_a;
            inputs.extend([("delta", delta), ("nu(A)", nu_a), ("delta_bar", dbar)]);
            let rho = hitting::taboo_radius(kernel, set)?;
            let vartheta = |l: f64| {
                hitting::even_odd_with_radius(kernel, set, l, rho)
                    .ok()
                    .map(|(e, _)| set.members().iter().map(|&x| e[x]).fold(f64::NEG_INFINITY, f64::max))
            };
            let w = window::skeleton_window(m, dbar, vartheta).expect("positive M");
            Ok(over_window(name, inputs, w, opts, |l| {
                let theta = vartheta(l).unwrap_or(f64::INFINITY);
                formulas::reversible_nonatomic_rate(m, delta, nu_a, pi_a, theta, l).map(Outcome::Curve)
            }))
        }
        _ => unreachable!("rate families without lambda are handled by evaluate"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c2(a: f64, b: f64) -> FiniteChain {
        FiniteChain::from_rows(&[vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap()
    }

    #[test]
    fn skeleton_radius_two_state() {
        let c = c2(0.3, 0.2);
        let a = StateSet::new(2, [1]).unwrap();
        let r = skeleton_radius(c.kernel(), &a, 10.0 / 3.0).unwrap();
        let closed = libm::sqrt(1.0 / 0.55);
        assert!((r - closed).abs() < 1e-9, "{r} vs {closed}");
    }

    #[test]
    fn hitmoment_reports_exact_sup() {
        let c = c2(0.3, 0.2);
        let a = StateSet::new(2, [1]).unwrap();
        let opts = EvalOptions { lambda: LambdaSpec::Values(vec![1.1]), ..Default::default() };
        let e = evaluate(BoundName::HitMoment, &c, &a, &opts).unwrap();
        match &e.points[0].outcome {
            Ok(Outcome::HitMoment { m_bound, exact_sup }) => {
                assert!((m_bound - 1.1 / (1.0 - 10.0 / 3.0 * libm::log(1.1))).abs() < 1e-12);
                assert!((exact_sup.unwrap() - 1.434782608695652).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_set_is_rejected() {
        let c = c2(0.3, 0.2);
        let a = StateSet::new(2, [0, 1]).unwrap();
        let e = evaluate(BoundName::General, &c, &a, &EvalOptions::default());
        assert_eq!(e, Err(Precondition::FullSet));
    }

    #[test]
    fn non_reversible_rejected_by_reversible_families() {
        let c = FiniteChain::from_rows(&[vec![0.1, 0.6, 0.3], vec![0.3, 0.1, 0.6], vec![0.6, 0.3, 0.1]]).unwrap();
        let a = StateSet::singleton(3, 0).unwrap();
        for name in
            [BoundName::Atomic, BoundName::NonAtomic, BoundName::ReversibleAtomic, BoundName::ReversibleNonAtomic]
        {
            let e = evaluate(name, &c, &a, &EvalOptions::default());
            assert!(matches!(e, Err(Precondition::NotReversible { .. })), "{name}: {e:?}");
        }
        for name in [
            BoundName::GammaSeries,
            BoundName::UniformGeometric,
            BoundName::Dobrushin,
            BoundName::HitMoment,
            BoundName::General,
        ] {
            assert!(evaluate(name, &c, &a, &EvalOptions::default()).unwrap().is_feasible(), "{name}");
        }
    }

    #[test]
    fn grid_curves_dominate_profile() {
        let c = c2(0.3, 0.2);
        let a = StateSet::singleton(2, 1).unwrap();
        let tv = c.tv_profile(200);
        for name in [
            BoundName::Atomic,
            BoundName::ReversibleAtomic,
            BoundName::GammaSeries,
            BoundName::UniformGeometric,
            BoundName::Dobrushin,
        ] {
            let e = evaluate(name, &c, &a, &EvalOptions::default()).unwrap();
            assert!(e.is_feasible(), "{name}");
            let env = e.envelope(200).unwrap();
            for n in 0..=200 {
                assert!(env[n] >= tv[n] - 1e-9, "{name} n={n}");
            }
        }
    }

    #[test]
    fn gamma_series_exact_head() {
        let c = c2(0.3, 0.2);
        let a = StateSet::singleton(2, 1).unwrap();
        let e = evaluate(BoundName::GammaSeries, &c, &a, &EvalOptions::default()).unwrap();
        let curve = e.curves().next().unwrap();
        assert!((curve.eval(1) - 0.6).abs() < 1e-12);
        // 1.2 / (1 - 0.5)
        assert!((curve.stationary_factor() - 2.4).abs() < 1e-9);
    }

    #[test]
    fn periodic_chain_has_no_contraction() {
        let c = c2(1.0, 1.0);
        let a = StateSet::singleton(2, 0).unwrap();
        let e = evaluate(BoundName::Dobrushin, &c, &a, &EvalOptions { max_steps: 8, ..Default::default() }).unwrap();
        assert!(matches!(e.first_infeasibility(), Some(Infeasibility::NoContraction { .. })));
        let g = evaluate(BoundName::GammaSeries, &c, &a, &EvalOptions { max_steps: 8, ..Default::default() }).unwrap();
        assert_eq!(g.stationary_bound(0.01), None);
    }
}
