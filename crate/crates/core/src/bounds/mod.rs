//! Convergence-rate curves and perturbation bounds as functions of exact
//! chain quantities.
//!
//! [`formulas`] holds the pure map from scalars (`M`, `L`, `kappa`,
//! `delta`, `nu(A)`, `pi(A)`, `lambda`, ...) to constants and curves.
//! [`window`] computes the admissible `lambda` ranges and grids, and
//! [`driven`] derives every input from a chain and a target set, routing
//! each bound through its structural preconditions.
//!
//! Rates bound `||P^n - pi||` in the full L1 convention. Perturbation
//! factors multiply `||P~ - P|| = max_x sum_y |P~(x,y) - P(x,y)|`.

use alloc::vec::Vec;
use core::fmt;

pub mod driven;
pub mod formulas;
pub mod window;

pub use driven::{evaluate, EvalOptions, Evaluation, Outcome, Point, Precondition};
pub use formulas::*;
pub use window::{envelope, lambda_grid, LambdaWindow};

/// The nine bound families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundName {
    GammaSeries,
    UniformGeometric,
    Dobrushin,
    HitMoment,
    Atomic,
    NonAtomic,
    ReversibleAtomic,
    ReversibleNonAtomic,
    General,
}

impl BoundName {
    pub const ALL: [BoundName; 9] = [
        BoundName::GammaSeries,
        BoundName::UniformGeometric,
        BoundName::Dobrushin,
        BoundName::HitMoment,
        BoundName::Atomic,
        BoundName::NonAtomic,
        BoundName::ReversibleAtomic,
        BoundName::ReversibleNonAtomic,
        BoundName::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundName::GammaSeries => "gamma_series",
            BoundName::UniformGeometric => "uniform_geometric",
            BoundName::Dobrushin => "dobrushin",
            BoundName::HitMoment => "hitmoment",
            BoundName::Atomic => "atomic_rate",
            BoundName::NonAtomic => "nonatomic_rate",
            BoundName::ReversibleAtomic => "reversible_atomic_rate",
            BoundName::ReversibleNonAtomic => "reversible_nonatomic_rate",
            BoundName::General => "general_perturbation",
        }
    }

    pub fn parse(s: &str) -> Option<BoundName> {
        let s = s.trim();
        BoundName::ALL.iter().copied().find(|b| b.as_str() == s).or(match s {
            "gamma_series_bounds" => Some(BoundName::GammaSeries),
            "uniform_geometric_gamma" => Some(BoundName::UniformGeometric),
            "dobrushin_perturbation" => Some(BoundName::Dobrushin),
            "hitmoment_bound" => Some(BoundName::HitMoment),
            "atomic" | "atomic_perturbation" => Some(BoundName::Atomic),
            "nonatomic" | "nonatomic_perturbation" => Some(BoundName::NonAtomic),
            "reversible_atomic" => Some(BoundName::ReversibleAtomic),
            "reversible_nonatomic" => Some(BoundName::ReversibleNonAtomic),
            "general" => Some(BoundName::General),
            _ => None,
        })
    }

    /// Whether the bound produces a rate curve in `n`.
    pub fn has_curve(self) -> bool {
        !matches!(self, BoundName::HitMoment | BoundName::General)
    }

    /// Whether the bound takes a free `lambda`.
    pub fn uses_lambda(self) -> bool {
        !matches!(self, BoundName::GammaSeries | BoundName::UniformGeometric | BoundName::Dobrushin)
    }
}

impl fmt::Display for BoundName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named reason a bound does not apply at the given parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    /// `1 < lambda < upper` fails.
    LambdaWindow { lambda: f64, upper: f64 },
    /// `M <= 0`: the target set is the whole space and every window
    /// degenerates.
    DegenerateMoment { m: f64 },
    /// A scalar input is outside its domain.
    InvalidParameter { name: &'static str, value: f64 },
    /// `lambda < (1 + delta lambda)(1 - M log lambda)` fails.
    SplitMoment { lambda: f64, lhs: f64, rhs: f64 },
    /// `1 < lambda < kappa ^ (1 - delta)^{-1/alpha}` fails.
    SplitAtomMoment { lambda: f64, upper: f64 },
    /// `sup_{x in A} sum lambda^{2n} F^{2n}(x, A) <= vartheta < 1` fails.
    EvenReturnMass { lambda: f64, vartheta: f64 },
    /// `lambda^2 < (1 - vartheta)(1 - M log lambda)^2 (1 + delta_bar lambda^2)` fails.
    SkeletonMoment { lambda: f64, lhs: f64, rhs: f64 },
    /// `dP < (1 - 1/lambda) / (M0 + M0^2)` fails.
    PerturbationThreshold { dp: f64, threshold: f64 },
    /// `delta < 1` fails for a Dobrushin coefficient.
    NoContraction { delta: f64 },
    /// A logarithm in an exponent has argument outside its range.
    InvalidLog { name: &'static str, argument: f64 },
    /// The skeleton radius is not above one.
    SkeletonRadius { radius: f64 },
    /// No `lambda > 1` satisfies the named condition.
    EmptyWindow { binding: &'static str, upper: f64 },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::LambdaWindow { lambda, upper } => {
                write!(f, "lambda = {lambda} outside the window (1, {upper})")
            }
            Infeasibility::DegenerateMoment { m } => {
                write!(f, "uniform hitting moment M = {m} is not positive (target set is the whole space)")
            }
            Infeasibility::InvalidParameter { name, value } => write!(f, "{name} = {value} out of range"),
            Infeasibility::SplitMoment { lambda, lhs, rhs } => write!(
                f,
                "split moment condition lambda < (1 + delta lambda)(1 - M log lambda) fails at lambda = {lambda}: {lhs} >= {rhs}"
            ),
            Infeasibility::SplitAtomMoment { lambda, upper } => write!(
                f,
                "lambda = {lambda} outside (1, kappa ^ (1 - delta)^(-1/alpha)) = (1, {upper})"
            ),
            Infeasibility::EvenReturnMass { lambda, vartheta } => write!(
                f,
                "even return mass sup_A sum lambda^(2n) F^(2n) = {vartheta} is not below 1 at lambda = {lambda}"
            ),
            Infeasibility::SkeletonMoment { lambda, lhs, rhs } => write!(
                f,
                "skeleton moment condition fails at lambda = {lambda}: lambda^2 = {lhs} >= {rhs}"
            ),
            Infeasibility::PerturbationThreshold { dp, threshold } => {
                write!(f, "||P~ - P|| = {dp} is not below the threshold {threshold}")
            }
            Infeasibility::NoContraction { delta } => write!(f, "Dobrushin coefficient {delta} is not below 1"),
            Infeasibility::InvalidLog { name, argument } => {
                write!(f, "exponent {name} undefined: logarithm argument {argument} out of range")
            }
            Infeasibility::SkeletonRadius { radius } => write!(f, "skeleton radius {radius} is not above 1"),
            Infeasibility::EmptyWindow { binding, upper } => {
                write!(f, "empty lambda window: {binding} caps lambda at {upper}")
            }
        }
    }
}

/// Non-fatal notes attached to a curve.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// `|lambda - rho| < 1e-6`: the `(rho - lambda)^{-1}` factor is badly
    /// conditioned.
    NearResonance { gap: f64 },
    /// The printed closed-form sum differs from the direct summation.
    FormulaMismatch { formula: f64, direct: f64 },
    /// The certified rate is not above one.
    Vacuous,
    /// `sum gamma_n` diverges, so only finite-horizon kernel bounds exist.
    DivergentSeries,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::NearResonance { gap } => {
                write!(f, "lambda within {gap} of the skeleton radius: constants are ill-conditioned")
            }
            Warning::FormulaMismatch { formula, direct } => {
                write!(f, "closed-form Gamma_inf = {formula} differs from direct sum {direct}; direct sum reported")
            }
            Warning::Vacuous => write!(f, "certified rate is not above 1"),
            Warning::DivergentSeries => write!(f, "rate series diverges: no stationary bound"),
        }
    }
}

/// Geometric tail of a tabulated rate sequence beyond its head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaTail {
    /// The sequence is zero past the head.
    Finite,
    /// `gamma_{len + j} <= c rho^j`.
    Geometric { c: f64, rho: f64 },
    /// `gamma_{len + j} = c`; the series diverges when `c > 0`.
    Constant(f64),
}

/// The functional shape of a rate curve `n -> gamma_n`.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveForm {
    Tabulated {
        head: Vec<f64>,
        tail: GammaTail,
    },
    /// `min{2, c rho^n}`.
    Capped {
        c: f64,
        rho: f64,
    },
    /// `2 delta^{floor(n / steps)}`.
    Step {
        delta: f64,
        steps: usize,
    },
    /// `a ra^{-n} + b rb^{-n}`.
    TwoRate {
        a: f64,
        ra: f64,
        b: f64,
        rb: f64,
    },
    /// `(d + e n) r^{-n}`.
    Linear {
        d: f64,
        e: f64,
        r: f64,
    },
}

/// `r / (r - 1)`.
fn geometric_factor(r: f64) -> f64 {
    r / (r - 1.0)
}

fn inv_pow(r: f64, n: usize) -> f64 {
    libm::pow(r, -(n as f64))
}

impl CurveForm {
    pub fn eval(&self, n: usize) -> f64 {
        match self {
            CurveForm::Tabulated { head, tail } => match head.get(n) {
                Some(v) => *v,
                None => {
                    let j = n - head.len();
                    match tail {
                        GammaTail::Finite => 0.0,
                        GammaTail::Geometric { c, rho } => c * libm::pow(*rho, j as f64),
                        GammaTail::Constant(c) => *c,
                    }
                }
            },
            CurveForm::Capped { c, rho } => (c * libm::pow(*rho, n as f64)).min(2.0),
            CurveForm::Step { delta, steps } => 2.0 * libm::pow(*delta, (n / steps) as f64),
            CurveForm::TwoRate { a, ra, b, rb } => a * inv_pow(*ra, n) + b * inv_pow(*rb, n),
            CurveForm::Linear { d, e, r } => (d + e * n as f64) * inv_pow(*r, n),
        }
    }

    /// `Gamma_n`: the coefficient in `||P~^n - P^n|| <= Gamma_n ||P~ - P||`.
    pub fn kernel_factor(&self, n: usize) -> f64 {
        match self {
            CurveForm::Tabulated { head, tail } => {
                let k = n.min(head.len());
                let mut s = crate::linalg::compensated_sum(head[..k].iter().copied());
                if n > head.len() {
                    let j = (n - head.len()) as f64;
                    s += match tail {
                        GammaTail::Finite => 0.0,
                        GammaTail::Geometric { c, rho } => c * (1.0 - libm::pow(*rho, j)) / (1.0 - rho),
                        GammaTail::Constant(c) => c * j,
                    };
                }
                s
            }
            CurveForm::Capped { c, rho } => {
                let j = capped_index(*c, *rho);
                if n <= j {
                    2.0 * n as f64
                } else {
                    2.0 * j as f64 + c * (libm::pow(*rho, j as f64) - libm::pow(*rho, n as f64)) / (1.0 - rho)
                }
            }
            CurveForm::Step { delta, steps } => {
                2.0 * *steps as f64 * (1.0 - libm::pow(*delta, n as f64)) / (1.0 - delta)
            }
            CurveForm::TwoRate { a, ra, b, rb } => {
                a * geometric_factor(*ra) * (1.0 - inv_pow(*ra, n))
                    + b * geometric_factor(*rb) * (1.0 - inv_pow(*rb, n))
            }
            CurveForm::Linear { d, e, r } => {
                let head = d + e / (r - 1.0);
                geometric_factor(*r) * (head - (head + e * n as f64) * inv_pow(*r, n))
            }
        }
    }

    /// `Gamma_inf`, possibly infinite.
    pub fn stationary_factor(&self) -> f64 {
        match self {
            CurveForm::Tabulated { head, tail } => {
                let s = crate::linalg::compensated_sum(head.iter().copied());
                match tail {
                    GammaTail::Finite => s,
                    GammaTail::Geometric { c, rho } => s + c / (1.0 - rho),
                    GammaTail::Constant(c) if *c > 0.0 => f64::INFINITY,
                    GammaTail::Constant(_) => s,
                }
            }
            CurveForm::Capped { c, rho } => {
                let j = capped_index(*c, *rho);
                2.0 * j as f64 + c * libm::pow(*rho, j as f64) / (1.0 - rho)
            }
            CurveForm::Step { delta, steps } => 2.0 * *steps as f64 / (1.0 - delta),
            CurveForm::TwoRate { a, ra, b, rb } => a * geometric_factor(*ra) + b * geometric_factor(*rb),
            CurveForm::Linear { d, e, r } => geometric_factor(*r) * (d + e / (r - 1.0)),
        }
    }
}

/// First `m` with `c rho^m < 2`, i.e. the number of capped terms in
/// `sum_m min{2, c rho^m}`.
pub(crate) fn capped_index(c: f64, rho: f64) -> usize {
    let mut j = 0usize;
    let mut v = c;
    while v >= 2.0 && j < crate::tol::MAX_HORIZON {
        j += 1;
        v = c * libm::pow(rho, j as f64);
    }
    j
}

/// A rate bound `||P^n - pi|| <= curve(n)` with its constants and the
/// perturbation factors it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub name: BoundName,
    pub lambda: Option<f64>,
    pub constants: Vec<(&'static str, f64)>,
    pub form: CurveForm,
    pub warnings: Vec<Warning>,
}

impl BoundCurve {
    pub fn eval(&self, n: usize) -> f64 {
        self.form.eval(n)
    }

    pub fn curve(&self, n_max: usize) -> Vec<f64> {
        (0..=n_max).map(|n| self.eval(n)).collect()
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn kernel_factor(&self, n: usize) -> f64 {
        self.form.kernel_factor(n)
    }

    pub fn stationary_factor(&self) -> f64 {
        self.form.stationary_factor()
    }

    /// `Gamma_n dP`.
    pub fn kernel_bound(&self, n: usize, dp: f64) -> f64 {
        if dp == 0.0 {
            return 0.0;
        }
        self.kernel_factor(n) * dp
    }

    /// `Gamma_inf dP`; `None` when the rate series diverges.
    pub fn stationary_bound(&self, dp: f64) -> Option<f64> {
        let g = self.stationary_factor();
        if !g.is_finite() {
            return None;
        }
        Some(if dp == 0.0 { 0.0 } else { g * dp })
    }
}

/// Kernel and stationary perturbation bounds at a fixed `n` and `dP`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBounds {
    pub kernel: f64,
    pub stationary: f64,
}

impl PerturbationBounds {
    pub fn from_curve(curve: &BoundCurve, dp: f64, n: usize) -> Self {
        PerturbationBounds {
            kernel: curve.kernel_bound(n, dp),
            stationary: curve.stationary_bound(dp).unwrap_or(f64::INFINITY),
        }
    }
}
