//! Every bound as a pure function of exact scalar inputs.

use alloc::vec;
use alloc::vec::Vec;

use super::{capped_index, BoundCurve, BoundName, CurveForm, GammaTail, Infeasibility, PerturbationBounds, Warning};
use crate::bounds::window;

/// Absolute tolerance selecting the `lambda = rho` branch.
pub const RESONANCE_EXACT: f64 = 1e-12;
/// Gap below which the `lambda != rho` branch is flagged as ill-conditioned.
pub const RESONANCE_WARN: f64 = 1e-6;

fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

/// `sqrt(1/p - 1)`, with rounding below zero clamped.
fn l2_constant(p: f64) -> f64 {
    libm::sqrt((1.0 / p - 1.0).max(0.0))
}

fn check_moment(m: f64) -> Result<(), Infeasibility> {
    if !m.is_finite() {
        return Err(Infeasibility::InvalidParameter { name: "M", value: m });
    }
    if m <= 0.0 {
        return Err(Infeasibility::DegenerateMoment { m });
    }
    Ok(())
}

fn check_probability(name: &'static str, p: f64) -> Result<(), Infeasibility> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Infeasibility::InvalidParameter { name, value: p })
    }
}

/// `1 < lambda < e^{1/M}`.
pub fn check_hit_window(m: f64, lambda: f64) -> Result<(), Infeasibility> {
    check_moment(m)?;
    let upper = libm::exp(1.0 / m);
    if lambda > 1.0 && lambda < upper && 1.0 - m * libm::log(lambda) > 0.0 {
        Ok(())
    } else {
        Err(Infeasibility::LambdaWindow { lambda, upper })
    }
}

/// Rate curve built from a given sequence `gamma` (head plus certified
/// tail). `Gamma_n = sum_{m<n} gamma_m`.
pub fn gamma_series_bounds(head: Vec<f64>, tail: GammaTail) -> Result<BoundCurve, Infeasibility> {
    for &g in &head {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Infeasibility::InvalidParameter { name: "gamma", value: g });
        }
    }
    match tail {
        GammaTail::Geometric { c, rho } if !(c >= 0.0) || !(0.0..1.0).contains(&rho) => {
            return Err(Infeasibility::InvalidParameter { name: "tail_rho", value: rho });
        }
        GammaTail::Constant(c) if !(c >= 0.0) => {
            return Err(Infeasibility::InvalidParameter { name: "tail", value: c });
        }
        _ => {}
    }
    let form = CurveForm::Tabulated { head, tail };
    let gamma_inf = form.stationary_factor();
    let (constants, warnings) = if gamma_inf.is_finite() {
        (vec![("Gamma_inf", gamma_inf)], Vec::new())
    } else {
        (Vec::new(), vec![Warning::DivergentSeries])
    };
    Ok(BoundCurve { name: BoundName::GammaSeries, lambda: None, constants, form, warnings })
}

/// `Gamma_inf = 2 + 2k + C (1 - rho)^{-1} rho^{1 + k}` with
/// `k = floor(log_rho(2 / C))`.
pub fn uniform_geometric_formula(c: f64, rho: f64) -> (f64, f64) {
    let k = libm::floor(libm::log(2.0 / c) / libm::log(rho));
    (k, 2.0 + 2.0 * k + c / (1.0 - rho) * libm::pow(rho, 1.0 + k))
}

/// Uniform geometric rate `||P^n - pi|| <= C rho^n`, used through
/// `gamma_n = min{2, C rho^n}`. The reported `Gamma_inf` is the direct sum;
/// the closed form is emitted alongside and any disagreement is flagged.
pub fn uniform_geometric_gamma(c: f64, rho: f64) -> Result<BoundCurve, Infeasibility> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Infeasibility::InvalidParameter { name: "C", value: c });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Infeasibility::InvalidParameter { name: "rho", value: rho });
    }
    let form = CurveForm::Capped { c, rho };
    let direct = form.stationary_factor();
    let mut constants =
        vec![("C", c), ("cor_rho", rho), ("capped_terms", capped_index(c, rho) as f64), ("Gamma_inf", direct)];
    let mut warnings = Vec::new();
    if rho > 0.0 {
        let (k, formula) = uniform_geometric_formula(c, rho);
        constants.push(("floor_index", k));
        constants.push(("Gamma_inf_formula", formula));
        if (formula - direct).abs() > 1e-9 * direct.max(1.0) {
            warnings.push(Warning::FormulaMismatch { formula, direct });
        }
    }
    Ok(BoundCurve { name: BoundName::UniformGeometric, lambda: None, constants, form, warnings })
}

/// Rate `2 delta^{floor(n/N)}` from the Dobrushin coefficient of `P^N`,
/// with kernel factor `2N(1 - delta^n)/(1 - delta)` and stationary factor
/// `2N/(1 - delta)`.
pub fn dobrushin_bound(delta: f64, steps: usize) -> Result<BoundCurve, Infeasibility> {
    if steps == 0 {
        return Err(Infeasibility::InvalidParameter { name: "N", value: 0.0 });
    }
    if !(delta >= 0.0) {
        return Err(Infeasibility::InvalidParameter { name: "delta", value: delta });
    }
    if delta >= 1.0 {
        return Err(Infeasibility::NoContraction { delta });
    }
    Ok(BoundCurve {
        name: BoundName::Dobrushin,
        lambda: None,
        constants: vec![("delta", delta), ("N", steps as f64), ("Gamma_inf", 2.0 * steps as f64 / (1.0 - delta))],
        form: CurveForm::Step { delta, steps },
        warnings: Vec::new(),
    })
}

pub fn dobrushin_perturbation(
    delta: f64,
    steps: usize,
    dp: f64,
    n: usize,
) -> Result<PerturbationBounds, Infeasibility> {
    Ok(PerturbationBounds::from_curve(&dobrushin_bound(delta, steps)?, dp, n))
}

/// `sup_x E_x[lambda^{tau_A}] <= lambda / (1 - M log lambda)`.
pub fn hitmoment_bound(m: f64, lambda: f64) -> Result<f64, Infeasibility> {
    check_hit_window(m, lambda)?;
    Ok(lambda / (1.0 - m * libm::log(lambda)))
}

/// Atom rate `D1 e^{-n/M} + E1 lambda^{-n}`.
pub fn atomic_rate(m: f64, pi_a: f64, lambda: f64) -> Result<BoundCurve, Infeasibility> {
    check_probability("pi(A)", pi_a)?;
    let m1 = hitmoment_bound(m, lambda)?;
    let r = libm::exp(1.0 / m);
    let c1 = l2_constant(pi_a);
    let ratio = (r - 1.0) / (r - lambda);
    let d1 = c1 * (1.0 - ratio * m1);
    let e1 = m1 * (positive_part(2.0 - c1) / lambda + ratio * c1);
    Ok(BoundCurve {
        name: BoundName::Atomic,
        lambda: Some(lambda),
        constants: vec![("C1", c1), ("M1", m1), ("D1", d1), ("E1", e1), ("e^{1/M}", r)],
        form: CurveForm::TwoRate { a: d1, ra: r, b: e1, rb: lambda },
        warnings: Vec::new(),
    })
}

pub fn atomic_perturbation(
    m: f64,
    pi_a: f64,
    lambda: f64,
    dp: f64,
    n: usize,
) -> Result<PerturbationBounds, Infeasibility> {
    Ok(PerturbationBounds::from_curve(&atomic_rate(m, pi_a, lambda)?, dp, n))
}

/// Constants of the split-chain moment inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMomentConstants {
    /// `log((L - delta kappa)/(1 - delta)) / log kappa`; `None` for `delta = 1`.
    pub alpha: Option<f64>,
    /// `log((L - (1 - delta) kappa)/delta) / log kappa`.
    pub beta: Option<f64>,
    /// `K = kappa ^ (1 - delta)^{-1/alpha}`.
    pub k_rate: Result<f64, Infeasibility>,
    /// `delta lambda^beta / (1 - (1 - delta) lambda^alpha)`.
    pub atom_moment_bound: Result<f64, Infeasibility>,
    /// `M2 = delta lambda / ((1 + delta lambda)(1 - M log lambda) - lambda)`.
    pub m2: Result<f64, Infeasibility>,
    /// Upper end of the interval where the split moment condition holds.
    pub split_upper: f64,
    /// Positive root of `delta M l^2 + (M + 1)(1 - delta) l - (M + 1) = 0`,
    /// a sufficient `lambda` for the split moment condition.
    pub quadratic_root: f64,
}

fn log_ratio(name: &'static str, argument: f64, kappa: f64) -> Result<f64, Infeasibility> {
    if !(argument > 0.0) || !argument.is_finite() {
        return Err(Infeasibility::InvalidLog { name, argument });
    }
    Ok(libm::log(argument) / libm::log(kappa))
}

/// `K = kappa ^ (1 - delta)^{-1/alpha}`; `K = kappa` when `delta = 1`.
pub fn split_rate(l: f64, kappa: f64, delta: f64) -> Result<(Option<f64>, f64), Infeasibility> {
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(Infeasibility::InvalidParameter { name: "kappa", value: kappa });
    }
    check_probability("delta", delta)?;
    if delta == 1.0 {
        return Ok((None, kappa));
    }
    let arg = (l - delta * kappa) / (1.0 - delta);
    let alpha = log_ratio("alpha", arg, kappa)?;
    if !(alpha > 0.0) {
        return Err(Infeasibility::InvalidLog { name: "alpha", argument: arg });
    }
    Ok((Some(alpha), kappa.min(libm::pow(1.0 - delta, -1.0 / alpha))))
}

/// Positive root of `delta M l^2 + (M + 1)(1 - delta) l - (M + 1)`.
pub fn split_quadratic_root(m: f64, delta: f64) -> f64 {
    let b = (m + 1.0) * (1.0 - delta);
    let a = delta * m;
    let c = -(m + 1.0);
    if a == 0.0 {
        return -c / b;
    }
    // stable form of (-b + sqrt(b^2 - 4ac)) / 2a
    let disc = libm::sqrt(b * b - 4.0 * a * c);
    (2.0 * -c) / (b + disc)
}

/// `(lhs, rhs)` of the split moment condition `lambda < (1 + delta lambda)(1 - M log lambda)`.
pub fn split_condition(m: f64, delta: f64, lambda: f64) -> (f64, f64) {
    (lambda, (1.0 + delta * lambda) * (1.0 - m * libm::log(lambda)))
}

/// `M2`, the uniform split-chain moment bound.
pub fn split_m2(m: f64, delta: f64, lambda: f64) -> Result<f64, Infeasibility> {
    check_probability("delta", delta)?;
    check_hit_window(m, lambda)?;
    let (lhs, rhs) = split_condition(m, delta, lambda);
    if !(lhs < rhs) {
        return Err(Infeasibility::SplitMoment { lambda, lhs, rhs });
    }
    Ok(delta * lambda / (rhs - lhs))
}

pub fn split_moment_constants(l: f64, kappa: f64, delta: f64, m: f64, lambda: f64) -> SplitMomentConstants {
    let rate = split_rate(l, kappa, delta);
    let beta = if kappa > 1.0 && delta > 0.0 && delta <= 1.0 {
        log_ratio("beta", (l - (1.0 - delta) * kappa) / delta, kappa).ok()
    } else {
        None
    };
    let alpha = rate.as_ref().ok().and_then(|(a, _)| *a);
    let atom_moment_bound = match (&rate, beta) {
        (Err(e), _) => Err(e.clone()),
        (Ok(_), None) => Err(Infeasibility::InvalidLog { name: "beta", argument: (l - (1.0 - delta) * kappa) / delta }),
        (Ok((alpha, upper)), Some(beta)) => {
            if lambda > 1.0 && lambda < *upper {
                let denom = match alpha {
                    Some(a) => 1.0 - (1.0 - delta) * libm::pow(lambda, *a),
                    None => 1.0,
                };
                Ok(delta * libm::pow(lambda, beta) / denom)
            } else {
                Err(Infeasibility::SplitAtomMoment { lambda, upper: *upper })
            }
        }
    };
    let m2 = split_m2(m, delta, lambda);
    let split_upper = if m > 0.0 && delta > 0.0 { window::split_upper(m, delta) } else { f64::NAN };
    SplitMomentConstants {
        alpha,
        beta,
        k_rate: rate.map(|(_, k)| k),
        atom_moment_bound,
        m2,
        split_upper,
        quadratic_root: split_quadratic_root(m, delta),
    }
}

/// Split-chain rate `(D2 + E2 n) lambda^{-n}`.
pub fn nonatomic_rate(m: f64, delta: f64, pi_a: f64, lambda: f64) -> Result<BoundCurve, Infeasibility> {
    check_probability("pi(A)", pi_a)?;
    let m2 = split_m2(m, delta, lambda)?;
    let c2 = l2_constant(delta * pi_a);
    let d2 = c2 + positive_part(2.0 - c2) / lambda * m2;
    let e2 = c2 * (1.0 - 1.0 / lambda) * m2;
    Ok(BoundCurve {
        name: BoundName::NonAtomic,
        lambda: Some(lambda),
        constants: vec![("C2", c2), ("M2", m2), ("D2", d2), ("E2", e2)],
        form: CurveForm::Linear { d: d2, e: e2, r: lambda },
        warnings: Vec::new(),
    })
}

pub fn nonatomic_perturbation(
    m: f64,
    delta: f64,
    pi_a: f64,
    lambda: f64,
    dp: f64,
    n: usize,
) -> Result<PerturbationBounds, Infeasibility> {
    Ok(PerturbationBounds::from_curve(&nonatomic_rate(m, delta, pi_a, lambda)?, dp, n))
}

/// Geometric rates certified by a geometric return moment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricRates {
    pub alpha: Option<f64>,
    /// `K = kappa ^ (1 - delta)^{-1/alpha}`.
    pub k: Result<f64, Infeasibility>,
    /// `gamma = log[(L^2/(1 - theta) - dbar kappa^2)/(1 - dbar)] / log kappa`.
    pub gamma_exponent: Result<f64, Infeasibility>,
    /// `Gamma = kappa ^ (1 - dbar)^{-1/gamma}`, `dbar = delta^2 nu(A)`.
    pub gamma_rate: Result<f64, Infeasibility>,
    pub warnings: Vec<Warning>,
}

pub fn geometric_rate_constants(l: f64, kappa: f64, delta: f64, nu_a: f64, theta: f64) -> GeometricRates {
    let split = split_rate(l, kappa, delta);
    let alpha = split.as_ref().ok().and_then(|(a, _)| *a);
    let k = split.map(|(_, k)| k);
    let mut warnings = Vec::new();
    let dbar = delta * delta * nu_a;
    let (gamma_exponent, gamma_rate) = if !(theta < 1.0) || !(theta >= 0.0) {
        let e = Infeasibility::InvalidParameter { name: "theta", value: theta };
        (Err(e.clone()), Err(e))
    } else if !(kappa > 1.0) {
        let e = Infeasibility::InvalidParameter { name: "kappa", value: kappa };
        (Err(e.clone()), Err(e))
    } else if !(dbar > 0.0 && dbar <= 1.0) {
        let e = Infeasibility::InvalidParameter { name: "delta^2 nu(A)", value: dbar };
        (Err(e.clone()), Err(e))
    } else if dbar == 1.0 {
        (Err(Infeasibility::InvalidLog { name: "gamma", argument: f64::INFINITY }), Ok(kappa))
    } else {
        let arg = (l * l / (1.0 - theta) - dbar * kappa * kappa) / (1.0 - dbar);
        match log_ratio("gamma", arg, kappa) {
            Ok(g) if g > 0.0 => {
                let rate = kappa.min(libm::pow(1.0 - dbar, -1.0 / g));
                if !(rate > 1.0 + 1e-12) {
                    warnings.push(Warning::Vacuous);
                }
                (Ok(g), Ok(rate))
            }
            Ok(_) => {
                let e = Infeasibility::InvalidLog { name: "gamma", argument: arg };
                (Err(e.clone()), Err(e))
            }
            Err(e) => (Err(e.clone()), Err(e)),
        }
    };
    GeometricRates { alpha, k, gamma_exponent, gamma_rate, warnings }
}

/// Reversible atom rate: `F1 rho^{-n} + G1 lambda^{-n}` for `lambda != rho`,
/// `(J1 + K1 n) rho^{-n}` for `lambda = rho`, with `rho` the skeleton radius.
pub fn reversible_atomic_rate(
    m: f64,
    pi_a: f64,
    skeleton_radius: f64,
    lambda: f64,
) -> Result<BoundCurve, Infeasibility> {
    check_probability("pi(A)", pi_a)?;
    let m1 = hitmoment_bound(m, lambda)?;
    let rho = skeleton_radius;
    if !(rho > 1.0) || !rho.is_finite() {
        return Err(Infeasibility::SkeletonRadius { radius: rho });
    }
    let c1 = l2_constant(pi_a);
    let gap = (lambda - rho).abs();
    let mut warnings = Vec::new();
    let mut constants = vec![("C1", c1), ("M1", m1), ("skeleton_radius", rho)];
    let form = if gap <= RESONANCE_EXACT {
        let j1 = c1 + positive_part(2.0 - c1) / rho * m1;
        let k1 = c1 * (1.0 - 1.0 / rho) * m1;
        constants.extend([("J1", j1), ("K1", k1)]);
        CurveForm::Linear { d: j1, e: k1, r: rho }
    } else {
        if gap < RESONANCE_WARN {
            warnings.push(Warning::NearResonance { gap });
        }
        let ratio = (rho - 1.0) / (rho - lambda);
        let f1 = c1 * (1.0 - ratio * m1);
        let g1 = m1 * (positive_part(2.0 - c1) / lambda + ratio * c1);
        constants.extend([("F1", f1), ("G1", g1)]);
        CurveForm::TwoRate { a: f1, ra: rho, b: g1, rb: lambda }
    };
    Ok(BoundCurve { name: BoundName::ReversibleAtomic, lambda: Some(lambda), constants, form, warnings })
}

/// `(lhs, rhs)` of `lambda^2 < (1 - vartheta)(1 - M log lambda)^2 (1 + dbar lambda^2)`.
pub fn skeleton_condition(m: f64, dbar: f64, vartheta: f64, lambda: f64) -> (f64, f64) {
    let g = 1.0 - m * libm::log(lambda);
    (lambda * lambda, (1.0 - vartheta) * g * g * (1.0 + dbar * lambda * lambda))
}

/// Reversible split rate `(D3 + E3 n) lambda^{-n}` through the two-skeleton.
/// `vartheta` must dominate the even-return mass at `lambda`; the
/// chain-driven layer computes it exactly.
pub fn reversible_nonatomic_rate(
    m: f64,
    delta: f64,
    nu_a: f64,
    pi_a: f64,
    vartheta: f64,
    lambda: f64,
) -> Result<BoundCurve, Infeasibility> {
    check_probability("pi(A)", pi_a)?;
    check_probability("delta", delta)?;
    check_probability("nu(A)", nu_a)?;
    check_hit_window(m, lambda)?;
    if !(0.0..1.0).contains(&vartheta) {
        return Err(Infeasibility::EvenReturnMass { lambda, vartheta });
    }
    let dbar = delta * delta * nu_a;
    let (lhs, rhs) = skeleton_condition(m, dbar, vartheta, lambda);
    if !(lhs < rhs) {
        return Err(Infeasibility::SkeletonMoment { lambda, lhs, rhs });
    }
    let m3 = dbar * lambda * lambda / (rhs - lhs);
    let c3 = l2_constant(dbar * pi_a);
    let d3 = c3 * lambda + positive_part(2.0 - c3) / lambda * m3;
    let e3 = c3 * (lambda - 1.0 / lambda) * m3 / 2.0;
    Ok(BoundCurve {
        name: BoundName::ReversibleNonAtomic,
        lambda: Some(lambda),
        constants: vec![("delta_bar", dbar), ("vartheta", vartheta), ("C3", c3), ("M3", m3), ("D3", d3), ("E3", e3)],
        form: CurveForm::Linear { d: d3, e: e3, r: lambda },
        warnings: Vec::new(),
    })
}

/// Perturbation bounds from either reversible rate.
pub fn reversible_perturbation(curve: &BoundCurve, dp: f64, n: usize) -> PerturbationBounds {
    PerturbationBounds::from_curve(curve, dp, n)
}

/// The V-norm perturbation bound, valid for non-reversible chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralBound {
    pub lambda: f64,
    /// `M0 = 1 / (1 - M log lambda)`.
    pub m0: f64,
    /// `(1 - 1/lambda) / (M0 + M0^2)`.
    pub threshold: f64,
}

impl GeneralBound {
    pub fn new(m: f64, lambda: f64) -> Result<Self, Infeasibility> {
        check_hit_window(m, lambda)?;
        let m0 = 1.0 / (1.0 - m * libm::log(lambda));
        Ok(GeneralBound { lambda, m0, threshold: (1.0 - 1.0 / lambda) / (m0 + m0 * m0) })
    }

    /// `M0^2 (1 + M0) / (1 - 1/lambda - M0 (1 + M0) dP)`.
    pub fn factor(&self, dp: f64) -> Result<f64, Infeasibility> {
        if !(dp >= 0.0) {
            return Err(Infeasibility::InvalidParameter { name: "dP", value: dp });
        }
        if !(dp < self.threshold) {
            return Err(Infeasibility::PerturbationThreshold { dp, threshold: self.threshold });
        }
        let m0 = self.m0;
        Ok(m0 * m0 * (1.0 + m0) / (1.0 - 1.0 / self.lambda - m0 * (1.0 + m0) * dp))
    }

    pub fn bound(&self, dp: f64) -> Result<f64, Infeasibility> {
        let f = self.factor(dp)?;
        Ok(if dp == 0.0 { 0.0 } else { f * dp })
    }
}

pub fn general_perturbation(m: f64, lambda: f64, dp: f64) -> Result<f64, Infeasibility> {
    GeneralBound::new(m, lambda)?.bound(dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn gamma_series_examples() {
        let g = gamma_series_bounds(vec![], GammaTail::Geometric { c: 3.0, rho: 0.25 }).unwrap();
        assert!(close(g.stationary_factor(), 4.0, 1e-15));
        let flat = gamma_series_bounds(vec![], GammaTail::Constant(2.0)).unwrap();
        assert!(flat.stationary_factor().is_infinite());
        assert_eq!(flat.stationary_bound(0.1), None);
        assert!(close(flat.kernel_factor(7), 14.0, 1e-15));
        let head: Vec<f64> = (0..200).map(|n| (1.2 * libm::pow(0.5, n as f64)).min(2.0)).collect();
        let c2 = gamma_series_bounds(head, GammaTail::Finite).unwrap();
        assert!(close(c2.stationary_factor(), 2.4, 1e-12));
    }

    #[test]
    fn uniform_geometric_examples() {
        let a = uniform_geometric_gamma(2.0, 0.5).unwrap();
        assert!(close(a.constant("Gamma_inf").unwrap(), 4.0, 1e-12));
        assert!(close(a.constant("Gamma_inf_formula").unwrap(), 4.0, 1e-12));
        let b = uniform_geometric_gamma(1.2, 0.5).unwrap();
        assert_eq!(b.constant("floor_index"), Some(-1.0));
        assert!(close(b.constant("Gamma_inf").unwrap(), 2.4, 1e-12));
        assert!(b.warnings.is_empty());
        let tiny = uniform_geometric_gamma(1e-9, 0.5).unwrap();
        assert!(tiny.constant("Gamma_inf").unwrap() < 3e-9);
        assert!(matches!(tiny.warnings[0], Warning::FormulaMismatch { .. }));
    }

    #[test]
    fn uniform_geometric_kernel_factor_matches_prefix_sums() {
        let b = uniform_geometric_gamma(7.0, 0.6).unwrap();
        let mut s = 0.0;
        for n in 0..60 {
            assert!(close(b.kernel_factor(n), s, 1e-12), "{n}");
            s += b.eval(n);
        }
    }

    #[test]
    fn dobrushin_examples() {
        let p = dobrushin_perturbation(0.5, 1, 0.01, 5).unwrap();
        assert!(close(p.stationary, 0.04, 1e-15));
        assert!(close(dobrushin_perturbation(0.0, 3, 1.0, 2).unwrap().stationary, 6.0, 1e-15));
        assert_eq!(dobrushin_perturbation(0.5, 1, 0.01, 0).unwrap().kernel, 0.0);
        assert!(matches!(dobrushin_bound(1.0, 1), Err(Infeasibility::NoContraction { .. })));
    }

    #[test]
    fn hitmoment_examples() {
        let b = hitmoment_bound(10.0 / 3.0, 1.1).unwrap();
        assert!(close(b, 1.1 / (1.0 - 10.0 / 3.0 * libm::log(1.1)), 1e-15));
        assert!(close(b, 1.612_19, 1e-5));
        assert!(close(hitmoment_bound(10.0 / 3.0, 1.0 + 1e-12).unwrap(), 1.0, 1e-10));
        assert!(matches!(hitmoment_bound(10.0 / 3.0, libm::exp(0.3)), Err(Infeasibility::LambdaWindow { .. })));
        assert!(matches!(hitmoment_bound(0.0, 1.1), Err(Infeasibility::DegenerateMoment { .. })));
    }

    #[test]
    fn atomic_examples() {
        let c = atomic_rate(10.0 / 3.0, 0.6, 1.1).unwrap();
        let c1 = libm::sqrt(2.0 / 3.0);
        assert!(close(c.constant("C1").unwrap(), c1, 1e-15));
        assert!(close(c.constant("D1").unwrap(), -1.0266, 1e-4));
        assert!(close(c.constant("E1").unwrap(), 3.5776, 1e-4));
        assert!(close(c.eval(0), 2.551, 1e-3));
        let p = atomic_perturbation(10.0 / 3.0, 0.6, 1.1, 0.01, 10).unwrap();
        let r = libm::exp(0.3);
        let expected = (r / (r - 1.0) * c.constant("D1").unwrap() + 11.0 * c.constant("E1").unwrap()) * 0.01;
        assert!(close(p.stationary, expected, 1e-14));
        assert!(close(p.stationary, 0.3540, 2e-4));
        let zero = atomic_perturbation(10.0 / 3.0, 0.6, 1.1, 0.0, 10).unwrap();
        assert_eq!((zero.kernel, zero.stationary), (0.0, 0.0));
        assert_eq!(atomic_perturbation(10.0 / 3.0, 0.6, 1.1, 0.01, 0).unwrap().kernel, 0.0);
        let whole = atomic_rate(2.0, 1.0, 1.2).unwrap();
        let m1 = whole.constant("M1").unwrap();
        assert!(close(whole.constant("E1").unwrap(), 2.0 * m1 / 1.2, 1e-15));
        assert!(whole.eval(400) < 1e-20);
    }

    #[test]
    fn split_moment_examples() {
        let m = 10.0 / 3.0;
        let root = split_quadratic_root(m, 0.5);
        let b: f64 = 13.0 / 6.0;
        let oracle = (-b + libm::sqrt(b * b + 4.0 * (5.0 / 3.0) * (13.0 / 3.0))) / (2.0 * 5.0 / 3.0);
        assert!(close(root, oracle, 1e-14));
        let (lhs, rhs) = split_condition(m, 0.5, root);
        assert!(lhs < rhs);
        let k = split_moment_constants(1.5, 1.2, 0.5, m, 1.05);
        let alpha = libm::log(1.8) / libm::log(1.2);
        assert!(close(k.alpha.unwrap(), alpha, 1e-14));
        assert!(close(*k.k_rate.as_ref().unwrap(), 1.2f64.min(libm::pow(0.5, -1.0 / alpha)), 1e-14));
        let atomic = split_moment_constants(1.5, 1.2, 1.0, m, 1.05);
        assert_eq!(atomic.k_rate, Ok(1.2));
        assert!(close(split_m2(m, 0.5, 1.0 + 1e-9).unwrap(), 1.0, 1e-6));
        let up = window::split_upper(m, 0.5);
        assert!(up > root);
        assert!(split_m2(m, 0.5, up * (1.0 - 1e-9)).is_ok());
        assert!(matches!(split_m2(m, 0.5, up * (1.0 + 1e-9)), Err(Infeasibility::SplitMoment { .. })));
    }

    #[test]
    fn nonatomic_examples() {
        let c = nonatomic_rate(3.0, 0.5, 2.0, 1.05);
        assert!(c.is_err());
        let full = nonatomic_rate(3.0, 1.0, 1.0, 1.05).unwrap();
        let m2 = full.constant("M2").unwrap();
        assert_eq!(full.constant("C2"), Some(0.0));
        assert!(close(full.eval(3), 2.0 / 1.05 * m2 * libm::pow(1.05, -3.0), 1e-14));
        let p = nonatomic_perturbation(3.0, 1.0, 1.0, 1.05, 0.01, 4).unwrap();
        assert!(close(p.stationary, 1.05 / 0.05 * full.constant("D2").unwrap() * 0.01, 1e-12));
        // the n = 1 partial sum is D2
        let c = nonatomic_rate(3.0, 0.4, 0.5, 1.02).unwrap();
        assert!(close(c.kernel_factor(1), c.constant("D2").unwrap(), 1e-12));
        assert!(close(c.kernel_factor(2), c.eval(0) + c.eval(1), 1e-12));
    }

    #[test]
    fn geometric_rate_examples() {
        let g = geometric_rate_constants(1.5, 1.2, 1.0, 0.5, 0.1);
        assert_eq!(g.k, Ok(1.2));
        let g = geometric_rate_constants(1.5, 1.2, 0.5, 1.0, 0.1);
        let gamma = libm::log((2.25 / 0.9 - 0.25 * 1.44) / 0.75) / libm::log(1.2);
        assert!(close(*g.gamma_exponent.as_ref().unwrap(), gamma, 1e-14));
        let rate = *g.gamma_rate.as_ref().unwrap();
        assert!(close(rate, 1.2f64.min(libm::pow(0.75, -1.0 / gamma)), 1e-14));
        let near = geometric_rate_constants(1.5, 1.2, 0.5, 1.0, 1.0 - 1e-12);
        let near_rate = *near.gamma_rate.as_ref().unwrap();
        assert!(near_rate > 1.0 && near_rate < rate);
        assert!(geometric_rate_constants(1.5, 1.2, 0.5, 1.0, 1.0).gamma_rate.is_err());
    }

    #[test]
    fn reversible_atomic_branches() {
        let m = 10.0 / 3.0;
        let rho = libm::sqrt(1.0 / 0.55);
        let eq = reversible_atomic_rate(m, 0.6, rho, rho).unwrap();
        let c1 = libm::sqrt(2.0 / 3.0);
        let m1 = hitmoment_bound(m, rho).unwrap();
        assert!(close(eq.constant("J1").unwrap(), c1 + (2.0 - c1) / rho * m1, 1e-15));
        let near = reversible_atomic_rate(m, 0.6, rho, rho - 1e-6).unwrap();
        assert!(eq.constant("F1").is_none() && near.constant("F1").is_some());
        for n in 0..=50 {
            let (a, b) = (eq.eval(n), near.eval(n));
            assert!((a - b).abs() <= 1e-3 * a.abs().max(b.abs()), "{n}: {a} {b}");
        }
        let whole = reversible_atomic_rate(m, 1.0, rho, rho).unwrap();
        assert_eq!(whole.constant("K1"), Some(0.0));
        assert!(close(whole.stationary_factor(), rho / (rho - 1.0) * whole.constant("J1").unwrap(), 1e-14));
        assert!(matches!(reversible_atomic_rate(m, 0.6, 1.0, 1.1), Err(Infeasibility::SkeletonRadius { .. })));
    }

    #[test]
    fn reversible_nonatomic_examples() {
        let c = reversible_nonatomic_rate(2.0, 1.0, 1.0, 1.0, 0.0, 1.01).unwrap();
        assert_eq!(c.constant("C3"), Some(0.0));
        let m3 = c.constant("M3").unwrap();
        assert!(close(c.eval(2), 2.0 / 1.01 * m3 * libm::pow(1.01, -2.0), 1e-14));
        assert!(matches!(
            reversible_nonatomic_rate(2.0, 1.0, 1.0, 1.0, 1.0 - 1e-15, 1.01),
            Err(Infeasibility::SkeletonMoment { .. })
        ));
        assert!(matches!(
            reversible_nonatomic_rate(2.0, 1.0, 1.0, 1.0, 1.0, 1.01),
            Err(Infeasibility::EvenReturnMass { .. })
        ));
    }

    #[test]
    fn general_examples() {
        let g = GeneralBound::new(10.0 / 3.0, 1.1).unwrap();
        assert!(close(g.m0, 1.465_63, 1e-5));
        assert!(close(g.threshold, 0.025_16, 1e-3));
        assert_eq!(g.bound(0.0), Ok(0.0));
        assert!(matches!(g.bound(g.threshold), Err(Infeasibility::PerturbationThreshold { .. })));
        assert!(general_perturbation(10.0 / 3.0, 1.1, g.threshold / 2.0).unwrap() > 0.0);
    }
}
