//! Identity and inequality checks, each comparing two independent exact
//! routines on seeded random chains.

use alloc::vec;
use alloc::vec::Vec;

use super::{random_chain, ChainRecipe, Construction, Rng};
use crate::bounds::driven::skeleton_radius;
use crate::bounds::formulas;
use crate::chain::{FiniteChain, StateSet};
use crate::hitting;
use crate::splitting::{build_split_chain, marginalize, split_measure};

/// Residual tolerance for every identity.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Steps over which split marginality is checked.
pub const MARGINAL_STEPS: usize = 50;
/// Longest path of the squared chain enumerated explicitly.
pub const ENUMERATION_HORIZON: usize = 12;
const ENUMERATION_BUDGET: f64 = 2e6;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub name: &'static str,
    /// Requested number of checked trials.
    pub trials: usize,
    /// Random draws consumed, including those whose hypotheses failed.
    pub attempts: usize,
    /// Draws where the hypotheses held and both sides were computed.
    pub checked: usize,
    pub max_residual: f64,
    /// Checked trials with residual above the tolerance.
    pub failures: usize,
}

impl IdentityReport {
    fn new(name: &'static str, trials: usize) -> Self {
        IdentityReport { name, trials, attempts: 0, checked: 0, max_residual: 0.0, failures: 0 }
    }

    fn record(&mut self, residual: f64) {
        self.checked += 1;
        if residual.is_nan() || residual > self.max_residual {
            self.max_residual = if residual.is_nan() { f64::INFINITY } else { residual };
        }
        if !(residual <= IDENTITY_TOL) {
            self.failures += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    /// Every requested trial was checked and none failed.
    pub fn complete(&self) -> bool {
        self.passed() && self.checked >= self.trials
    }
}

/// Draws per requested trial before a suite gives up.
const ATTEMPTS_PER_TRIAL: usize = 20;

impl IdentityReport {
    /// Starts the next draw, unless enough were checked or the budget ran out.
    fn next_draw(&mut self) -> bool {
        if self.checked >= self.trials || self.attempts >= self.trials * ATTEMPTS_PER_TRIAL {
            return false;
        }
        self.attempts += 1;
        true
    }
}

struct Trial {
    rng: Rng,
    chain: FiniteChain,
    n: usize,
}

fn trial(seed: u64, t: usize, constructions: &[Construction], min_n: usize, max_n: usize) -> Trial {
    let mut rng = Rng::stream(seed, t as u64);
    let n = rng.between(min_n, max_n);
    let c = constructions[t % constructions.len()];
    let chain = random_chain(&ChainRecipe::new(c, n, rng.next_u64()));
    Trial { rng, chain, n }
}

fn proper_subset(rng: &mut Rng, n: usize) -> StateSet {
    let k = rng.between(1, n - 1);
    StateSet::new(n, rng.subset(n, k)).expect("indices in range")
}

const MIXED: [Construction; 5] = Construction::ALL;
const REVERSIBLE: [Construction; 3] =
    [Construction::RandomReversible, Construction::LazyReversible, Construction::SquaredReversible];

/// Generalized Kac formula, relative to `max(1, sup_x E_x[kappa^tau])`.
pub fn kac_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("kac", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Trial { mut rng, chain, n } = trial(seed, t, &MIXED, 2, 10);
        let set = proper_subset(&mut rng, n);
        let k = chain.kernel();
        let Ok(rho) = hitting::taboo_radius(k, &set) else { continue };
        let top = if rho > 0.0 { 1.0 + 0.5 * (1.0 / rho - 1.0) } else { 3.0 };
        let kappa = 1.0 + rng.open01() * (top - 1.0);
        match (
            hitting::kac_residual(k, chain.stationary().as_slice(), &set, kappa),
            hitting::geometric_moments(k, &set, kappa),
        ) {
            (Ok(res), Ok(g)) => r.record(res / g.sup_tau.max(1.0)),
            _ => r.record(f64::INFINITY),
        }
    }
    r
}

/// Abel summation identity for the first-return law.
pub fn abel_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("abel", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Trial { mut rng, chain, n } = trial(seed, t, &MIXED, 2, 10);
        let set = proper_subset(&mut rng, n);
        let Ok(m) = hitting::uniform_hitting_moment(chain.kernel(), &set) else { continue };
        let law = hitting::return_law(chain.kernel(), &set, 60);
        r.record(hitting::abel_residual(&law, m, 50));
    }
    r
}

fn split_trial(seed: u64, t: usize) -> Option<(FiniteChain, crate::splitting::SplitChain)> {
    let Trial { mut rng, chain, n } = trial(seed, t, &MIXED, 2, 10);
    let k = rng.between(2.min(n - 1), n - 1);
    let set = StateSet::new(n, rng.subset(n, k)).ok()?;
    let cert = chain.find_minorization(&set).ok()?;
    let split = build_split_chain(&chain, &cert).ok()?;
    Some((chain, split))
}

/// `marginal(mu* P_split^n) = mu P^n` for point masses, `n <= 50`.
pub fn split_marginality_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("split_marginality", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Some((chain, split)) = split_trial(seed, t) else { continue };
        let n = chain.n_states();
        let p = chain.matrix();
        let q = split.kernel().matrix();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            let mut mu = vec![0.0; n];
            mu[x] = 1.0;
            let mut v = split_measure(&mu, split.cert());
            for _ in 0..MARGINAL_STEPS {
                mu = (0..n).map(|y| (0..n).map(|z| mu[z] * p[(z, y)]).sum()).collect();
                v = (0..2 * n).map(|j| (0..2 * n).map(|i| v[i] * q[(i, j)]).sum()).collect();
                let m = marginalize(&v);
                worst = worst.max((0..n).map(|y| (m[y] - mu[y]).abs()).fold(0.0, f64::max));
            }
        }
        r.record(worst);
    }
    r
}

/// `pi* P_split = pi*`.
pub fn split_invariance_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("split_invariance", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Some((_, split)) = split_trial(seed.wrapping_add(1), t) else { continue };
        r.record(split.invariance_residual());
    }
    r
}

/// Return law of `P^2` from the recursion versus explicit enumeration of
/// `P^2`-paths that avoid `A` before their last step.
pub fn squared_return_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("squared_return_law", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Trial { mut rng, chain, n } = trial(seed, t, &MIXED, 2, 5);
        let set = proper_subset(&mut rng, n);
        let p = chain.matrix();
        // P^2 entrywise, independent of the matrix product used elsewhere
        let mut p2 = vec![vec![0.0; n]; n];
        for (x, row) in p2.iter_mut().enumerate() {
            for (y, v) in row.iter_mut().enumerate() {
                *v = (0..n).map(|z| p[(x, z)] * p[(z, y)]).sum();
            }
        }
        let outside = (n - set.len()) as f64;
        let mut horizon = ENUMERATION_HORIZON;
        while horizon > 1 && (n * n) as f64 * libm::pow(outside, (horizon - 1) as f64) > ENUMERATION_BUDGET {
            horizon -= 1;
        }
        let law = hitting::return_law(&chain.kernel().squared(), &set, horizon);
        let mut worst: f64 = 0.0;
        for x in 0..n {
            let mut f = vec![0.0; horizon];
            enumerate(&p2, &set, x, 1, 1.0, horizon, &mut f);
            for (k, v) in f.iter().enumerate() {
                worst = worst.max((v - law.mass(k + 1, x)).abs());
            }
        }
        r.record(worst);
    }
    r
}

fn enumerate(p2: &[Vec<f64>], set: &StateSet, y: usize, depth: usize, w: f64, horizon: usize, f: &mut [f64]) {
    for (z, &step) in p2[y].iter().enumerate() {
        let w2 = w * step;
        if w2 == 0.0 {
            continue;
        }
        if set.contains(z) {
            f[depth - 1] += w2;
        } else if depth < horizon {
            enumerate(p2, set, z, depth + 1, w2, horizon, f);
        }
    }
}

/// Split-chain moment inequality and atom moment bound. The left sides
/// come from the split kernel's linear solve; the right sides from the
/// base chain's hitting moments and the printed constants.
pub fn split_moment_suite(trials: usize, seed: u64) -> (IdentityReport, IdentityReport) {
    let mut ineq = IdentityReport::new("split_moment_inequality", trials);
    let mut atom = IdentityReport::new("split_atom_moment", trials);
    for t in 0.. {
        let more_ineq = ineq.next_draw();
        let more_atom = atom.next_draw();
        if !more_ineq && !more_atom {
            break;
        }
        let Trial { mut rng, chain, n } = trial(seed, t, &MIXED, 2, 9);
        let k = rng.between(2.min(n - 1), n - 1);
        let set = StateSet::new(n, rng.subset(n, k)).expect("indices in range");
        let Ok(cert) = chain.find_minorization(&set) else { continue };
        let Ok(split) = build_split_chain(&chain, &cert) else { continue };
        let kernel = chain.kernel();
        let (Ok(rho), Ok(m)) = (hitting::taboo_radius(kernel, &set), hitting::uniform_hitting_moment(kernel, &set))
        else {
            continue;
        };
        let top = if rho > 0.0 { 1.0 / rho } else { 4.0 };
        let kappa = libm::exp(rng.open01() * 0.9 * libm::log(top));
        let Ok(gk) = hitting::geometric_moments(kernel, &set, kappa) else { continue };
        let Ok((alpha, k_rate)) = formulas::split_rate(gk.l, kappa, cert.delta()) else { continue };
        if alpha.is_none() || !(k_rate > 1.0) {
            continue;
        }
        let lambda = libm::exp(rng.open01() * libm::log(k_rate));
        let d = cert.delta();
        let nu = cert.nu();
        let p = chain.matrix();
        let Ok(g) = hitting::geometric_moments(kernel, &set, lambda) else { continue };
        let s = &g.sigma_moment;
        // E[lambda^{tau_A}] from each split state, off the split kernel
        let mut base = vec![f64::NAN; 2 * n];
        for x in 0..n {
            base[x] = if set.contains(x) {
                lambda * (0..n).map(|y| (p[(x, y)] - d * nu[y]) / (1.0 - d) * s[y]).sum::<f64>()
            } else {
                g.tau_moment[x]
            };
        }
        let from_nu = lambda * (0..n).map(|y| nu[y] * s[y]).sum::<f64>();
        for &a in set.members() {
            base[n + a] = from_nu;
        }
        let sup0 = set.members().iter().map(|&a| base[a]).fold(f64::NEG_INFINITY, f64::max);
        let den = 1.0 - (1.0 - d) * sup0;
        let lhs = hitting::geometric_moments(split.kernel(), split.atom(), lambda);
        if more_ineq && den > 0.0 {
            match &lhs {
                Ok(l) => {
                    let worst = split
                        .reachable()
                        .into_iter()
                        .map(|i| {
                            let rhs = d * base[i] / den;
                            (l.tau_moment[i] - rhs).max(0.0) / rhs.max(1.0)
                        })
                        .fold(0.0, f64::max);
                    ineq.record(worst);
                }
                Err(_) => ineq.record(f64::INFINITY),
            }
        }
        let c = formulas::split_moment_constants(gk.l, kappa, d, m, lambda);
        if let (true, Ok(b)) = (more_atom, c.atom_moment_bound) {
            match &lhs {
                Ok(l) => {
                    let v = set.members().iter().map(|&a| l.tau_moment[n + a]).fold(0.0, f64::max);
                    atom.record((v - b).max(0.0) / b.max(1.0));
                }
                Err(_) => atom.record(f64::INFINITY),
            }
        }
    }
    (ineq, atom)
}

/// `Fbar(s) <= F0(s) + F1(s) sup F1 / (1 - sup F0)` for `s` below the
/// skeleton radius, with `Fbar` from the return law of `P^2`.
pub fn skeleton_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("skeleton_inequality", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Trial { mut rng, chain, n } = trial(seed, t, &MIXED, 2, 10);
        let set = proper_subset(&mut rng, n);
        let kernel = chain.kernel();
        let Ok(m) = hitting::uniform_hitting_moment(kernel, &set) else { continue };
        let Ok(radius) = skeleton_radius(kernel, &set, m) else { continue };
        let s = 1.0 + rng.open01() * 0.95 * (radius - 1.0);
        let (Ok(rho), Ok(rho_bar)) =
            (hitting::taboo_radius(kernel, &set), hitting::taboo_radius(&kernel.squared(), &set))
        else {
            continue;
        };
        let decay = (s * rho).max(s * s * rho_bar);
        let horizon = (2 * hitting::horizon_for_radius(decay) + 20).min(crate::tol::MAX_HORIZON);
        match hitting::skeleton_generating(kernel, &set, s, horizon) {
            Ok(g) => {
                if let Some(excess) = g.max_excess() {
                    r.record(excess.max(0.0));
                }
            }
            Err(_) => r.record(f64::INFINITY),
        }
    }
    r
}

/// `r0(P) <= e^{-1/M}` for non-negative definite reversible chains with
/// a singleton atom.
pub fn spectral_atom_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("spectral_atom", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Trial { mut rng, chain, n } =
            trial(seed, t, &[Construction::LazyReversible, Construction::SquaredReversible], 2, 12);
        let set = StateSet::singleton(n, rng.below(n)).expect("in range");
        let (Ok(m), Ok(spec)) = (hitting::uniform_hitting_moment(chain.kernel(), &set), chain.spectral_r0()) else {
            continue;
        };
        r.record((spec.r0 - libm::exp(-1.0 / m)).max(0.0));
    }
    r
}

/// `r0(P) <= 1/rho` for reversible chains with a singleton atom, `rho`
/// the skeleton radius.
pub fn spectral_skeleton_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("spectral_skeleton", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Trial { mut rng, chain, n } = trial(seed, t, &[Construction::RandomReversible], 2, 12);
        let set = StateSet::singleton(n, rng.below(n)).expect("in range");
        let Ok(m) = hitting::uniform_hitting_moment(chain.kernel(), &set) else { continue };
        let (Ok(radius), Ok(spec)) = (skeleton_radius(chain.kernel(), &set, m), chain.spectral_r0()) else {
            continue;
        };
        if radius > 1.0 {
            r.record((spec.r0 - 1.0 / radius).max(0.0));
        }
    }
    r
}

/// `r0(P) <= 1/K` for the split-chain rate `K` on reversible chains.
pub fn rate_certificate_suite(trials: usize, seed: u64) -> IdentityReport {
    let mut r = IdentityReport::new("rate_certificate", trials);
    for t in 0.. {
        if !r.next_draw() {
            break;
        }
        let Trial { mut rng, chain, n } = trial(seed, t, &REVERSIBLE, 3, 10);
        let k = rng.between(2, n - 1);
        let set = StateSet::new(n, rng.subset(n, k)).expect("in range");
        let Ok(cert) = chain.find_minorization(&set) else { continue };
        let kernel = chain.kernel();
        let Ok(rho) = hitting::taboo_radius(kernel, &set) else { continue };
        let top = if rho > 0.0 { 1.0 / rho } else { 4.0 };
        let kappa = libm::exp(rng.open01() * 0.9 * libm::log(top));
        let Ok(g) = hitting::geometric_moments(kernel, &set, kappa) else { continue };
        let Ok((_, k_rate)) = formulas::split_rate(g.l, kappa, cert.delta()) else { continue };
        let Ok(spec) = chain.spectral_r0() else { continue };
        if k_rate > 1.0 {
            r.record((spec.r0 - 1.0 / k_rate).max(0.0));
        }
    }
    r
}

/// Every identity and inequality suite.
pub fn identity_suite(trials: usize, seed: u64) -> Vec<IdentityReport> {
    let (ineq, atom) = split_moment_suite(trials, seed);
    vec![
        kac_suite(trials, seed),
        abel_suite(trials, seed),
        split_marginality_suite(trials, seed),
        split_invariance_suite(trials, seed),
        squared_return_suite(trials, seed),
        ineq,
        atom,
        skeleton_suite(trials, seed),
        spectral_atom_suite(trials, seed),
        spectral_skeleton_suite(trials, seed),
        rate_certificate_suite(trials, seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_identities_hold_on_small_runs() {
        for rep in identity_suite(12, 5) {
            assert!(rep.complete(), "{rep:?}");
        }
    }
}
