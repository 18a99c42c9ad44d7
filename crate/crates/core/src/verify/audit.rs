//! Independent re-check of every feasibility claim.
//!
//! Each draw picks a bound family, a chain, a target set, `lambda` (and
//! `dP` where relevant) at random, lets the bound report, and whenever it
//! reports feasible re-evaluates each printed window condition from
//! scratch: `M` from survival sums instead of the linear solve, `delta`
//! and `nu(A)` from column minima, the even-return mass from the
//! truncated return series instead of the closed form.

use alloc::vec;
use alloc::vec::Vec;

use super::soundness::admissible_construction;
use super::{random_chain, ChainRecipe, Construction, Rng};
use crate::bounds::driven::LambdaSpec;
use crate::bounds::{evaluate, formulas, BoundName, EvalOptions, Outcome};
use crate::chain::{FiniteChain, StateSet};
use crate::hitting;

/// Conditions within this relative distance of their boundary are not
/// decided by the audit.
pub const AMBIGUITY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditTarget {
    Bound(BoundName),
    SplitMoment,
}

impl AuditTarget {
    pub const ALL: [AuditTarget; 7] = [
        AuditTarget::Bound(BoundName::HitMoment),
        AuditTarget::Bound(BoundName::Atomic),
        AuditTarget::Bound(BoundName::NonAtomic),
        AuditTarget::Bound(BoundName::ReversibleAtomic),
        AuditTarget::Bound(BoundName::ReversibleNonAtomic),
        AuditTarget::Bound(BoundName::General),
        AuditTarget::SplitMoment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditTarget::Bound(b) => b.as_str(),
            AuditTarget::SplitMoment => "split_moment_constants",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditFailure {
    pub draw: usize,
    pub target: &'static str,
    pub condition: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub draws: usize,
    /// Draws rejected on structural preconditions.
    pub rejected: usize,
    /// Draws where the bound reported feasible.
    pub claims: usize,
    /// Draws where the bound reported infeasible.
    pub refusals: usize,
    pub conditions: usize,
    pub ambiguous: usize,
    /// Claims contradicted by an independent check.
    pub dishonest: usize,
    pub failures: Vec<AuditFailure>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.dishonest == 0
    }
}

enum Verdict {
    Holds,
    Fails,
    Ambiguous,
}

fn less(lhs: f64, rhs: f64) -> Verdict {
    if !lhs.is_finite() || !rhs.is_finite() {
        return if lhs < rhs { Verdict::Holds } else { Verdict::Fails };
    }
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    if (lhs - rhs).abs() <= AMBIGUITY * scale {
        Verdict::Ambiguous
    } else if lhs < rhs {
        Verdict::Holds
    } else {
        Verdict::Fails
    }
}

struct Ledger<'a> {
    report: &'a mut AuditReport,
    draw: usize,
    target: &'static str,
    dishonest: bool,
}

impl Ledger<'_> {
    fn require(&mut self, condition: &'static str, lhs: f64, rhs: f64) {
        self.report.conditions += 1;
        match less(lhs, rhs) {
            Verdict::Holds => {}
            Verdict::Ambiguous => self.report.ambiguous += 1,
            Verdict::Fails => {
                self.dishonest = true;
                self.report.failures.push(AuditFailure { draw: self.draw, target: self.target, condition, lhs, rhs });
            }
        }
    }
}

/// `M = max_x sum_{n >= 0} P_x{sigma_A > n}` from the return-law survival.
pub fn survival_moment(chain: &FiniteChain, set: &StateSet) -> Option<f64> {
    let rho = hitting::taboo_radius(chain.kernel(), set).ok()?;
    let horizon = (2 * hitting::horizon_for_radius(rho) + 10).min(crate::tol::MAX_HORIZON);
    let law = hitting::return_law(chain.kernel(), set, horizon);
    set.complement()
        .into_iter()
        .map(|x| crate::linalg::compensated_sum((0..=horizon).map(|k| law.survival[k][x])))
        .reduce(f64::max)
}

/// `(delta, nu(A))` from column minima over `A`.
pub fn column_minorization(chain: &FiniteChain, set: &StateSet) -> (f64, f64) {
    let p = chain.matrix();
    let floor: Vec<f64> =
        (0..chain.n_states()).map(|y| set.members().iter().map(|&x| p[(x, y)]).fold(f64::INFINITY, f64::min)).collect();
    let delta: f64 = floor.iter().sum();
    let on_a: f64 = set.members().iter().map(|&y| floor[y]).sum();
    (delta.min(1.0), if delta > 0.0 { on_a / delta } else { 0.0 })
}

/// `sup_{x in A} sum_n lambda^{2n} F^{2n}(x, A)` by truncated summation.
pub fn even_mass_series(chain: &FiniteChain, set: &StateSet, lambda: f64) -> f64 {
    let Ok(rho) = hitting::taboo_radius(chain.kernel(), set) else { return f64::INFINITY };
    if lambda * rho >= 1.0 {
        return f64::INFINITY;
    }
    let horizon = (2 * hitting::horizon_for_radius(lambda * rho) + 10).min(crate::tol::MAX_HORIZON);
    let law = hitting::return_law(chain.kernel(), set, horizon);
    set.members()
        .iter()
        .map(|&x| {
            let mut w = 1.0;
            crate::linalg::compensated_sum((1..=horizon).map(|k| {
                w *= lambda;
                if k % 2 == 0 {
                    w * law.mass(k, x)
                } else {
                    0.0
                }
            }))
        })
        .fold(0.0, f64::max)
}

fn draw_set(rng: &mut Rng, n: usize, target: AuditTarget) -> StateSet {
    let singleton =
        matches!(target, AuditTarget::Bound(BoundName::Atomic | BoundName::ReversibleAtomic)) && rng.uniform() < 0.7;
    let k = if singleton { 1 } else { rng.between(1, n - 1) };
    StateSet::new(n, rng.subset(n, k)).expect("indices in range")
}

/// Runs `draws` random audits.
pub fn feasibility_audit(draws: usize, seed: u64) -> AuditReport {
    let mut report = AuditReport { draws, ..Default::default() };
    for draw in 0..draws {
        audit_draw(&mut report, draw, seed);
    }
    report
}

fn audit_draw(report: &mut AuditReport, draw: usize, seed: u64) {
    let mut rng = Rng::stream(seed, draw as u64);
    let target = rng.choose(&AuditTarget::ALL);
    let construction = match target {
        AuditTarget::Bound(b) if rng.uniform() < 0.75 => admissible_construction(b),
        AuditTarget::SplitMoment if rng.uniform() < 0.75 => Construction::LazyReversible,
        _ => rng.choose(&Construction::ALL),
    };
    let n = rng.between(2, 10);
    let chain = random_chain(&ChainRecipe::new(construction, n, rng.next_u64()));
    let set = draw_set(&mut rng, n, target);
    let Some(m) = survival_moment(&chain, &set) else {
        report.rejected += 1;
        return;
    };
    let top = libm::exp(1.0 / m);
    let lambda = 1.0 + (top - 1.0) * 1.3 * rng.open01();
    let mut ledger = Ledger { report, draw, target: target.as_str(), dishonest: false };

    match target {
        AuditTarget::SplitMoment => audit_split_moment(&mut ledger, &mut rng, &chain, &set, m, lambda),
        AuditTarget::Bound(name) => {
            let opts = EvalOptions { lambda: LambdaSpec::Values(vec![lambda]), ..Default::default() };
            let e = match evaluate(name, &chain, &set, &opts) {
                Ok(e) => e,
                Err(_) => {
                    ledger.report.rejected += 1;
                    return;
                }
            };
            let point = &e.points[0];
            let outcome = match &point.outcome {
                Ok(o) => o,
                Err(_) => {
                    ledger.report.refusals += 1;
                    return;
                }
            };
            ledger.require("1 < lambda", 1.0, lambda);
            ledger.require("lambda < e^{1/M}", lambda, top);
            let (delta, nu_a) = column_minorization(&chain, &set);
            let g = 1.0 - m * libm::log(lambda);
            let mut claimed = true;
            match (name, outcome) {
                (BoundName::NonAtomic, _) => {
                    ledger.require("lambda < (1 + delta lambda)(1 - M log lambda)", lambda, (1.0 + delta * lambda) * g);
                }
                (BoundName::ReversibleNonAtomic, Outcome::Curve(c)) => {
                    let theta = even_mass_series(&chain, &set, lambda);
                    ledger.require("even return mass < 1", theta, 1.0);
                    let used = c.constant("vartheta").unwrap_or(f64::NAN);
                    ledger.require("even return mass <= vartheta", theta, used + 1e-9);
                    let dbar = delta * delta * nu_a;
                    ledger.require(
                        "lambda^2 < (1 - vartheta)(1 - M log lambda)^2 (1 + dbar lambda^2)",
                        lambda * lambda,
                        (1.0 - theta) * g * g * (1.0 + dbar * lambda * lambda),
                    );
                }
                (BoundName::General, Outcome::General(gb)) => {
                    let m0 = 1.0 / g;
                    let threshold = (1.0 - 1.0 / lambda) / (m0 + m0 * m0);
                    let dp = 2.0 * threshold * rng.uniform();
                    match gb.bound(dp) {
                        Ok(_) => ledger.require("dP < (1 - 1/lambda)/(M0 + M0^2)", dp, threshold),
                        Err(_) => claimed = false,
                    }
                }
                _ => {}
            }
            if claimed {
                ledger.report.claims += 1;
            } else {
                ledger.report.refusals += 1;
            }
        }
    }
    if ledger.dishonest {
        ledger.report.dishonest += 1;
    }
}

fn audit_split_moment(
    ledger: &mut Ledger<'_>,
    rng: &mut Rng,
    chain: &FiniteChain,
    set: &StateSet,
    m: f64,
    lambda: f64,
) {
    let (delta, _) = column_minorization(chain, set);
    let Ok(rho) = hitting::taboo_radius(chain.kernel(), set) else {
        ledger.report.rejected += 1;
        return;
    };
    let top = if rho > 0.0 { 1.0 / rho } else { 4.0 };
    let kappa = libm::exp(rng.open01() * 0.95 * libm::log(top));
    let Ok(g) = hitting::geometric_moments(chain.kernel(), set, kappa) else {
        ledger.report.rejected += 1;
        return;
    };
    let l = g.l;
    // draw lambda on the kappa scale as well, so part (i) is exercised
    let lambda_i = 1.0 + (kappa - 1.0) * 1.2 * rng.open01();
    let c = formulas::split_moment_constants(l, kappa, delta, m, lambda_i);
    let c2 = formulas::split_moment_constants(l, kappa, delta, m, lambda);
    let mut any = false;
    if c.atom_moment_bound.is_ok() {
        any = true;
        ledger.require("1 < lambda", 1.0, lambda_i);
        if delta < 1.0 {
            ledger.require("delta kappa < L", delta * kappa, l);
            let alpha = libm::log((l - delta * kappa) / (1.0 - delta)) / libm::log(kappa);
            let k_rate = kappa.min(libm::pow(1.0 - delta, -1.0 / alpha));
            ledger.require("lambda < kappa ^ (1 - delta)^{-1/alpha}", lambda_i, k_rate);
            ledger.require("(1 - delta) lambda^alpha < 1", (1.0 - delta) * libm::pow(lambda_i, alpha), 1.0);
        } else {
            ledger.require("lambda < kappa", lambda_i, kappa);
        }
    }
    if c2.m2.is_ok() {
        any = true;
        ledger.require("1 < lambda", 1.0, lambda);
        ledger.require("lambda < e^{1/M}", lambda, libm::exp(1.0 / m));
        ledger.require(
            "lambda < (1 + delta lambda)(1 - M log lambda)",
            lambda,
            (1.0 + delta * lambda) * (1.0 - m * libm::log(lambda)),
        );
    }
    if any {
        ledger.report.claims += 1;
    } else {
        ledger.report.refusals += 1;
    }
}
