//! Taboo probabilities, first-return laws, and the moment functionals of
//! the hitting time `sigma_A = inf{n >= 0 : X_n in A}` and the return time
//! `tau_A = inf{n >= 1 : X_n in A}`.
//!
//! Infinite quantities are computed exactly from the absorbing linear
//! systems on `A^c`. Truncated series are used only where the law itself is
//! the object (return distributions, skeleton series), and their truncation
//! error is always reported against the closed form.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::chain::{Kernel, StateSet};
use crate::error::MomentError;
use crate::linalg;
use crate::tol;

/// Spectral radius of `P` restricted to `A^c` (the substochastic block `Q`).
pub fn taboo_radius(kernel: &Kernel, set: &StateSet) -> Result<f64, MomentError> {
    let out = set.complement();
    if out.is_empty() {
        return Ok(0.0);
    }
    let q = linalg::restrict(kernel.matrix(), &out, &out);
    linalg::spectral_radius(&q).ok_or(MomentError::Eigen)
}

fn block(kernel: &Kernel, set: &StateSet) -> (Vec<usize>, DMatrix<f64>, DVector<f64>) {
    let out = set.complement();
    let p = kernel.matrix();
    let q = linalg::restrict(p, &out, &out);
    let r = DVector::from_fn(out.len(), |i, _| set.members().iter().map(|&a| p[(out[i], a)]).sum());
    (out, q, r)
}

/// `E_x[sigma_A]`: zero on `A`, and `(I - Q) u = 1` on `A^c`.
pub fn hitting_mean(kernel: &Kernel, set: &StateSet) -> Result<Vec<f64>, MomentError> {
    Ok(hitting_moments(kernel, set, 1)?.swap_remove(0))
}

/// `E_x[sigma_A^l]` for `l = 1..=max_order`, by the recursion
/// `(I - Q) m_l = 1 + sum_{k=1}^{l-1} C(l,k) Q m_k` on `A^c`.
pub fn hitting_moments(kernel: &Kernel, set: &StateSet, max_order: usize) -> Result<Vec<Vec<f64>>, MomentError> {
    let n = kernel.n_states();
    let (out, q, _) = block(kernel, set);
    let k = out.len();
    let mut moments: Vec<DVector<f64>> = Vec::with_capacity(max_order);
    let lu = (DMatrix::<f64>::identity(k, k) - &q).lu();
    for order in 1..=max_order {
        let mut rhs = DVector::from_element(k, 1.0);
        let mut binom = 1.0;
        for (j, m) in moments.iter().enumerate() {
            let lower = j + 1;
            // C(order, lower)
            binom = binom * (order - lower + 1) as f64 / lower as f64;
            rhs += (&q * m) * binom;
        }
        let m = if k == 0 { DVector::zeros(0) } else { lu.solve(&rhs).ok_or(MomentError::Singular)? };
        if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MomentError::Singular);
        }
        moments.push(m);
    }
    Ok(moments
        .into_iter()
        .map(|m| {
            let mut full = vec![0.0; n];
            for (i, &x) in out.iter().enumerate() {
                full[x] = m[i];
            }
            full
        })
        .collect())
}

/// `E_x[tau_A] = 1 + sum_{y not in A} P(x,y) E_y[sigma_A]`.
pub fn return_mean(kernel: &Kernel, set: &StateSet) -> Result<Vec<f64>, MomentError> {
    let sigma = hitting_mean(kernel, set)?;
    let p = kernel.matrix();
    let out = set.complement();
    Ok((0..kernel.n_states()).map(|x| 1.0 + out.iter().map(|&y| p[(x, y)] * sigma[y]).sum::<f64>()).collect())
}

/// `M = sup_x E_x[sigma_A]`.
pub fn uniform_hitting_moment(kernel: &Kernel, set: &StateSet) -> Result<f64, MomentError> {
    Ok(hitting_mean(kernel, set)?.into_iter().fold(0.0, f64::max))
}

/// Generating functions `E_x[s^{sigma_A}]` and `E_x[s^{tau_A}]` for any real
/// `s` with `|s| rho(Q) < 1`.
pub fn generating(kernel: &Kernel, set: &StateSet, s: f64) -> Result<(Vec<f64>, Vec<f64>), MomentError> {
    let rho = taboo_radius(kernel, set)?;
    generating_with_radius(kernel, set, s, rho)
}

fn generating_with_radius(
    kernel: &Kernel,
    set: &StateSet,
    s: f64,
    rho: f64,
) -> Result<(Vec<f64>, Vec<f64>), MomentError> {
    if !s.is_finite() {
        return Err(MomentError::Domain { name: "s", value: s });
    }
    if s.abs() * rho >= 1.0 {
        return Err(MomentError::Divergent { lambda: s, taboo_radius: rho });
    }
    let n = kernel.n_states();
    let p = kernel.matrix();
    let (out, q, r) = block(kernel, set);
    let k = out.len();
    let mut sigma = vec![1.0; n];
    if k > 0 {
        let a = DMatrix::<f64>::identity(k, k) - &q * s;
        let u = linalg::solve(a, &(r * s)).ok_or(MomentError::Singular)?;
        for (i, &x) in out.iter().enumerate() {
            sigma[x] = u[i];
        }
    }
    let tau = (0..n)
        .map(|x| {
            let into: f64 = set.members().iter().map(|&a| p[(x, a)]).sum();
            let via: f64 = out.iter().map(|&y| p[(x, y)] * sigma[y]).sum();
            s * (into + via)
        })
        .collect();
    Ok((sigma, tau))
}

/// Geometric moments at a fixed `lambda >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMoments {
    pub lambda: f64,
    /// `E_x[lambda^{sigma_A}]`, equal to 1 on `A`.
    pub sigma_moment: Vec<f64>,
    /// `E_x[lambda^{tau_A}]`.
    pub tau_moment: Vec<f64>,
    /// `L = sup_{x in A} E_x[lambda^{tau_A}]`.
    pub l: f64,
    /// `sup_x E_x[lambda^{tau_A}]`.
    pub sup_tau: f64,
    pub taboo_radius: f64,
}

/// Solves `u = lambda (Q u + r)` on `A^c` and applies one-step conditioning
/// for the return time. Feasibility is decided spectrally.
pub fn geometric_moments(kernel: &Kernel, set: &StateSet, lambda: f64) -> Result<GeometricMoments, MomentError> {
    if !(lambda >= 1.0) {
        return Err(MomentError::Domain { name: "lambda", value: lambda });
    }
    let rho = taboo_radius(kernel, set)?;
    let (sigma, tau) = generating_with_radius(kernel, set, lambda, rho)?;
    let l = set.members().iter().map(|&x| tau[x]).fold(f64::NEG_INFINITY, f64::max);
    let sup_tau = tau.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(GeometricMoments { lambda, sigma_moment: sigma, tau_moment: tau, l, sup_tau, taboo_radius: rho })
}

/// `|LHS - RHS|` in the generalized Kac identity
/// `sum_{x in A} pi(x) E_x[k^{tau_A}] = k pi(A) + (k - 1) sum_{x not in A} pi(x) E_x[k^{sigma_A}]`.
pub fn kac_residual(kernel: &Kernel, pi: &[f64], set: &StateSet, kappa: f64) -> Result<f64, MomentError> {
    let g = geometric_moments(kernel, set, kappa)?;
    let lhs = linalg::compensated_sum(set.members().iter().map(|&x| pi[x] * g.tau_moment[x]));
    let pi_a: f64 = set.members().iter().map(|&x| pi[x]).sum();
    let outside = linalg::compensated_sum(set.complement().iter().map(|&x| pi[x] * g.sigma_moment[x]));
    let rhs = kappa * pi_a + (kappa - 1.0) * outside;
    Ok((lhs - rhs).abs())
}

/// The first-return law `F^n(x, A)` for `n = 1..=horizon` and the survival
/// function `P_x{tau_A > n}` for `n = 0..=horizon`, both by the vector
/// recursions `F^{n+1} = P (1_{A^c} F^n)` and `S_{n+1} = P (1_{A^c} S_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnLaw {
    /// `f[n - 1][x] = F^n(x, A)`.
    pub f: Vec<Vec<f64>>,
    /// `survival[n][x] = P_x{tau_A > n}`.
    pub survival: Vec<Vec<f64>>,
}

impl ReturnLaw {
    pub fn horizon(&self) -> usize {
        self.f.len()
    }

    /// `F^n(x, A)`, zero beyond the horizon.
    pub fn mass(&self, n: usize, x: usize) -> f64 {
        if n == 0 || n > self.f.len() {
            0.0
        } else {
            self.f[n - 1][x]
        }
    }

    /// `P_x{tau_A >= n}`.
    pub fn at_least(&self, n: usize, x: usize) -> f64 {
        if n == 0 {
            1.0
        } else {
            self.survival[n - 1][x]
        }
    }

    /// Mass not yet returned by the horizon, per state.
    pub fn truncation_mass(&self) -> Vec<f64> {
        self.survival[self.f.len()].clone()
    }
}

pub fn return_law(kernel: &Kernel, set: &StateSet, horizon: usize) -> ReturnLaw {
    let n = kernel.n_states();
    let p = kernel.matrix();
    let mask = set.indicator();
    let mut f = Vec::with_capacity(horizon);
    let mut survival = Vec::with_capacity(horizon + 1);
    survival.push(vec![1.0; n]);
    let mut hit: Vec<f64> = (0..n).map(|x| if mask[x] { 1.0 } else { 0.0 }).collect();
    for _ in 0..horizon {
        // masked vectors: continue only from states outside A
        let prev_hit: Vec<f64> = hit.clone();
        let prev_surv = survival.last().expect("seeded");
        let mut next_f = vec![0.0; n];
        let mut next_s = vec![0.0; n];
        let first = f.is_empty();
        for x in 0..n {
            let mut acc_f = 0.0;
            let mut acc_s = 0.0;
            for y in 0..n {
                let w = p[(x, y)];
                if w == 0.0 {
                    continue;
                }
                if first {
                    acc_f += if mask[y] { w } else { 0.0 };
                    acc_s += if mask[y] { 0.0 } else { w };
                } else if !mask[y] {
                    acc_f += w * prev_hit[y];
                    acc_s += w * prev_surv[y];
                }
            }
            next_f[x] = acc_f;
            next_s[x] = acc_s;
        }
        hit = next_f.clone();
        f.push(next_f);
        survival.push(next_s);
    }
    ReturnLaw { f, survival }
}

/// Horizon at which the tail `rho(Q)^n` drops below [`tol::TAIL`], capped
/// at [`tol::MAX_HORIZON`].
pub fn adaptive_horizon(kernel: &Kernel, set: &StateSet) -> Result<usize, MomentError> {
    Ok(horizon_for_radius(taboo_radius(kernel, set)?))
}

pub fn horizon_for_radius(rho: f64) -> usize {
    if rho <= 0.0 {
        return 1;
    }
    if rho >= 1.0 {
        return tol::MAX_HORIZON;
    }
    let h = libm::ceil(libm::log(tol::TAIL) / libm::log(rho));
    if h.is_finite() && h >= 1.0 {
        (h as usize).min(tol::MAX_HORIZON)
    } else {
        tol::MAX_HORIZON
    }
}

/// Taboo kernels, return law, and hitting means for one target set.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingProfile {
    pub target: StateSet,
    /// `taboo[n - 1] = _A P^n`, with `_A P^1 = P` and
    /// `_A P^{n+1}(x, .) = sum_{y not in A} _A P^n(x, y) P(y, .)`.
    pub taboo: Vec<DMatrix<f64>>,
    pub law: ReturnLaw,
    /// `E_x[sigma_A]`.
    pub sigma_mean: Vec<f64>,
    /// `M = max_x E_x[sigma_A]`.
    pub m: f64,
    /// `P_x{tau_A > horizon}`.
    pub truncation: Vec<f64>,
}

impl HittingProfile {
    /// `F^n(x, A)` read off the taboo kernels.
    pub fn taboo_return_mass(&self, n: usize, x: usize) -> f64 {
        let t = &self.taboo[n - 1];
        self.target.members().iter().map(|&a| t[(x, a)]).sum()
    }
}

pub fn hitting_profile(kernel: &Kernel, set: &StateSet, horizon: usize) -> Result<HittingProfile, MomentError> {
    if horizon == 0 {
        return Err(MomentError::Domain { name: "horizon", value: 0.0 });
    }
    let n = kernel.n_states();
    let p = kernel.matrix();
    let outside = DMatrix::from_fn(n, n, |i, j| if i == j && !set.contains(i) { 1.0 } else { 0.0 });
    let mut taboo = Vec::with_capacity(horizon);
    taboo.push(p.clone());
    for _ in 1..horizon {
        let next = taboo.last().expect("seeded") * &outside * p;
        taboo.push(next);
    }
    let law = return_law(kernel, set, horizon);
    let sigma_mean = hitting_mean(kernel, set)?;
    let m = sigma_mean.iter().copied().fold(0.0, f64::max);
    let truncation = law.truncation_mass();
    Ok(HittingProfile { target: set.clone(), taboo, law, sigma_mean, m, truncation })
}

/// Largest residual of the Abel summation identity
/// `sum_{m=1}^n b_{n-m} F^m = b_n - a_{n+1} + (1 - e^{-1/M}) b_n sum_{m=1}^n e^{m/M} a_m`
/// with `a_m = P_x{tau_A >= m}`, `b_k = e^{-k/M}`, over all `x` and
/// `1 <= n <= n_max`. Residuals are relative to `max(1, |lhs|)`.
pub fn abel_residual(law: &ReturnLaw, m_scale: f64, n_max: usize) -> f64 {
    let n_states = law.f.first().map_or(0, |r| r.len());
    let n_max = n_max.min(law.horizon().saturating_sub(1));
    let mut worst: f64 = 0.0;
    for x in 0..n_states {
        for n in 1..=n_max {
            let lhs = linalg::compensated_sum((1..=n).map(|m| libm::exp(-((n - m) as f64) / m_scale) * law.mass(m, x)));
            let bn = libm::exp(-(n as f64) / m_scale);
            let tail =
                linalg::compensated_sum((1..=n).map(|m| libm::exp(-((n - m) as f64) / m_scale) * law.at_least(m, x)));
            // e^{-n/M} e^{m/M} = e^{-(n-m)/M}, kept together to avoid overflow
            let rhs = bn - law.at_least(n + 1, x) + (1.0 - libm::exp(-1.0 / m_scale)) * tail;
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
        }
    }
    worst
}

/// Even and odd parts of the return generating function,
/// `F0(s) = sum_n s^{2n} F^{2n}` and `F1(s) = sum_n s^{2n-1} F^{2n-1}`,
/// computed in closed form from `G(s)` and `G(-s)`.
pub fn even_odd_generating(kernel: &Kernel, set: &StateSet, s: f64) -> Result<(Vec<f64>, Vec<f64>), MomentError> {
    let rho = taboo_radius(kernel, set)?;
    even_odd_with_radius(kernel, set, s, rho)
}

pub(crate) fn even_odd_with_radius(
    kernel: &Kernel,
    set: &StateSet,
    s: f64,
    rho: f64,
) -> Result<(Vec<f64>, Vec<f64>), MomentError> {
    let (_, plus) = generating_with_radius(kernel, set, s, rho)?;
    let (_, minus) = generating_with_radius(kernel, set, -s, rho)?;
    let even = plus.iter().zip(&minus).map(|(a, b)| 0.5 * (a + b)).collect();
    let odd = plus.iter().zip(&minus).map(|(a, b)| 0.5 * (a - b)).collect();
    Ok((even, odd))
}

/// Sup over `x in A` of the even-return series: the left side of the
/// even-mass window, evaluated in closed form.
pub fn even_return_mass(kernel: &Kernel, set: &StateSet, s: f64) -> Result<f64, MomentError> {
    let (even, _) = even_odd_generating(kernel, set, s)?;
    Ok(set.members().iter().map(|&x| even[x]).fold(f64::NEG_INFINITY, f64::max))
}

/// Generating-function comparison between the chain and its two-skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGenerating {
    pub s: f64,
    /// `F^{(0)}_{xA}(s) = sum_n s^{2n} F^{2n}(x, A)`.
    pub f0: Vec<f64>,
    /// `F^{(1)}_{xA}(s) = sum_n s^{2n-1} F^{2n-1}(x, A)`.
    pub f1: Vec<f64>,
    /// `sum_n s^{2n} Fbar^n(x, A)` for the return law of `P^2`.
    pub fbar: Vec<f64>,
    pub sup_f0: f64,
    pub sup_f1: f64,
    /// `F0 + F1 sup F1 / (1 - sup F0)`, present when `sup F0 < 1`.
    pub rhs: Option<Vec<f64>>,
    /// Largest gap between the truncated series and their closed forms.
    pub truncation: f64,
}

impl SkeletonGenerating {
    /// `max_x (fbar(x) - rhs(x))`; negative when the inequality holds.
    pub fn max_excess(&self) -> Option<f64> {
        let rhs = self.rhs.as_ref()?;
        Some(self.fbar.iter().zip(rhs).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Builds the three series from return laws (of `P` for `F0`, `F1`, and of
/// `P^2` computed independently for `Fbar`), truncated at `horizon` terms
/// each, and checks them against the closed forms.
pub fn skeleton_generating(
    kernel: &Kernel,
    set: &StateSet,
    s: f64,
    horizon: usize,
) -> Result<SkeletonGenerating, MomentError> {
    if !(s >= 0.0) {
        return Err(MomentError::Domain { name: "s", value: s });
    }
    let n = kernel.n_states();
    let squared = kernel.squared();
    let rho = taboo_radius(kernel, set)?;
    let rho_bar = taboo_radius(&squared, set)?;
    let (even_cf, odd_cf) = even_odd_with_radius(kernel, set, s, rho)?;
    let (_, bar_cf) = generating_with_radius(&squared, set, s * s, rho_bar)?;

    let law = return_law(kernel, set, horizon);
    let bar_law = return_law(&squared, set, horizon);
    let mut f0 = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let mut fbar = vec![0.0; n];
    for x in 0..n {
        let mut w = 1.0;
        let mut even = Vec::with_capacity(horizon / 2);
        let mut odd = Vec::with_capacity(horizon / 2 + 1);
        for k in 1..=horizon {
            w *= s;
            let term = w * law.mass(k, x);
            if k % 2 == 0 {
                even.push(term);
            } else {
                odd.push(term);
            }
        }
        f0[x] = linalg::compensated_sum(even);
        f1[x] = linalg::compensated_sum(odd);
        let mut w2 = 1.0;
        fbar[x] = linalg::compensated_sum((1..=horizon).map(|k| {
            w2 *= s * s;
            w2 * bar_law.mass(k, x)
        }));
    }
    let truncation = (0..n)
        .map(|x| (f0[x] - even_cf[x]).abs().max((f1[x] - odd_cf[x]).abs()).max((fbar[x] - bar_cf[x]).abs()))
        .fold(0.0, f64::max);
    if !(truncation <= 1e-10) {
        return Err(MomentError::Truncated { horizon, residual: truncation });
    }
    let sup_over_a = |v: &[f64]| set.members().iter().map(|&x| v[x]).fold(0.0, f64::max);
    let sup_f0 = sup_over_a(&f0);
    let sup_f1 = sup_over_a(&f1);
    let rhs = (sup_f0 < 1.0).then(|| (0..n).map(|x| f0[x] + f1[x] * sup_f1 / (1.0 - sup_f0)).collect());
    Ok(SkeletonGenerating { s, f0, f1, fbar, sup_f0, sup_f1, rhs, truncation })
}
