//! Admissible `lambda` intervals and the default evaluation grid.
//!
//! Every window here is an interval `(1, upper)`: each defining condition
//! is monotone in `lambda`, so the upper end is found by bisection.

use alloc::vec::Vec;

use super::{BoundCurve, Infeasibility};

pub const GRID_POINTS: usize = 21;
pub const GRID_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaWindow {
    pub upper: f64,
    /// Which condition sets the upper end.
    pub binding: &'static str,
}

impl LambdaWindow {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda > 1.0 && lambda < self.upper
    }

    pub fn is_empty(&self) -> bool {
        !(self.upper > 1.0)
    }

    fn tighten(self, upper: f64, binding: &'static str) -> Self {
        if upper < self.upper {
            LambdaWindow { upper, binding }
        } else {
            self
        }
    }
}

/// `(1, e^{1/M})`.
pub fn hit_window(m: f64) -> Result<LambdaWindow, Infeasibility> {
    if !(m > 0.0) {
        return Err(Infeasibility::DegenerateMoment { m });
    }
    Ok(LambdaWindow { upper: libm::exp(1.0 / m), binding: "e^{1/M}" })
}

/// Largest point of `(lo, hi)` where a predicate that is true near `lo`
/// and false past some threshold still holds, to full precision.
pub fn bisect_upper<F: FnMut(f64) -> bool>(lo: f64, hi: f64, mut ok: F) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if ok(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    a
}

/// Root of `(1 + delta l)(1 - M log l) = l` in `(1, e^{1/M})`. The ratio
/// `(1 + delta l)(1 - M log l) / l` decreases from `1 + delta` to `0`.
pub fn split_upper(m: f64, delta: f64) -> f64 {
    let top = libm::exp(1.0 / m);
    bisect_upper(1.0, top, |l| l < (1.0 + delta * l) * (1.0 - m * libm::log(l)))
}

/// `(1, e^{1/M})` intersected with the split moment condition.
pub fn nonatomic_window(m: f64, delta: f64) -> Result<LambdaWindow, Infeasibility> {
    Ok(hit_window(m)?.tighten(split_upper(m, delta), "split moment condition"))
}

/// `(1, e^{1/M})` intersected with the even-return and skeleton moment
/// conditions. `vartheta(l)` must be the exact even-return mass (or an
/// error once the series diverges).
pub fn skeleton_window<F>(m: f64, dbar: f64, mut vartheta: F) -> Result<LambdaWindow, Infeasibility>
where
    F: FnMut(f64) -> Option<f64>,
{
    let base = hit_window(m)?;
    let mut even_ok = |l: f64| vartheta(l).is_some_and(|t| t < 1.0);
    let even_upper = bisect_upper(1.0, base.upper, &mut even_ok);
    let w = base.tighten(even_upper, "even return mass");
    let both = bisect_upper(1.0, w.upper, |l| match vartheta(l) {
        Some(t) if t < 1.0 => {
            let (lhs, rhs) = super::formulas::skeleton_condition(m, dbar, t, l);
            lhs < rhs
        }
        _ => false,
    });
    Ok(w.tighten(both, "skeleton moment condition"))
}

/// `points` values of `lambda`, geometrically spaced strictly inside the
/// window with relative margin `margin` at both ends (in `log lambda`).
pub fn lambda_grid(window: &LambdaWindow, points: usize, margin: f64) -> Vec<f64> {
    if window.is_empty() || points == 0 {
        return Vec::new();
    }
    let top = if window.upper.is_finite() { libm::log(window.upper) } else { 1.0 };
    let lo = top * margin;
    let hi = top * (1.0 - margin);
    if points == 1 {
        return alloc::vec![libm::exp(0.5 * (lo + hi))];
    }
    (0..points)
        .map(|i| libm::exp(lo + (hi - lo) * i as f64 / (points - 1) as f64))
        .filter(|l| window.contains(*l))
        .collect()
}

/// Pointwise minimum over curves for `n = 0..=n_max`.
pub fn envelope(curves: &[BoundCurve], n_max: usize) -> Vec<f64> {
    (0..=n_max).map(|n| curves.iter().map(|c| c.eval(n)).fold(f64::INFINITY, f64::min)).collect()
}
