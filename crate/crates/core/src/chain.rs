//! Finite chains, stationary laws, and the baseline quantities every bound
//! is compared against.
//!
//! Variation distances use the full L1 convention: `||mu||` is
//! `sup_{|f| <= 1} |mu(f)| = sum_y |mu(y)|`, so `||P^n - pi|| <= 2`. The
//! Dobrushin coefficient carries the explicit factor one half.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::ChainError;
use crate::linalg;
use crate::splitting::{CertificateError, MinorizationCertificate};
use crate::tol;

/// A validated row-stochastic matrix. Irreducibility is not required, so
/// split chains with unreachable placeholder states are kernels too.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    matrix: DMatrix<f64>,
}

impl Kernel {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, ChainError> {
        let (rows, cols) = matrix.shape();
        if rows == 0 {
            return Err(ChainError::Empty);
        }
        if rows != cols {
            return Err(ChainError::NotSquare { rows, cols });
        }
        for i in 0..rows {
            let mut sum = 0.0;
            for j in 0..cols {
                let v = matrix[(i, j)];
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(ChainError::InvalidEntry { row: i, col: j, value: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > tol::ROW_SUM {
                return Err(ChainError::RowSum { row: i, sum });
            }
        }
        Ok(Kernel { matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ChainError> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn n_states(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn row(&self, x: usize) -> Vec<f64> {
        self.matrix.row(x).iter().copied().collect()
    }

    /// `P^n` by repeated squaring.
    pub fn power(&self, n: usize) -> DMatrix<f64> {
        let k = self.n_states();
        let mut result = DMatrix::identity(k, k);
        let mut base = self.matrix.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// `P^2` as a kernel. Products of stochastic matrices stay stochastic up
    /// to rounding, which is renormalized away.
    pub fn squared(&self) -> Kernel {
        let mut m = &self.matrix * &self.matrix;
        renormalize_rows(&mut m);
        Kernel { matrix: m }
    }

    /// Whether the transition graph on entries above [`tol::EDGE`] is
    /// strongly connected. Returns the first state outside the class of
    /// state 0 otherwise.
    pub fn strongly_connected(&self) -> Result<(), usize> {
        let n = self.n_states();
        for transpose in [false, true] {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(x) = stack.pop() {
                for y in 0..n {
                    let w = if transpose { self.matrix[(y, x)] } else { self.matrix[(x, y)] };
                    if w > tol::EDGE && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(missing);
            }
        }
        Ok(())
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ChainError> {
    let n = rows.len();
    if n == 0 {
        return Err(ChainError::Empty);
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(ChainError::RaggedRow { row: i, len: r.len(), expected: n });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub(crate) fn renormalize_rows(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        let s: f64 = m.row(i).sum();
        if s > 0.0 {
            for j in 0..m.ncols() {
                m[(i, j)] /= s;
            }
        }
    }
}

/// The invariant probability vector of an irreducible chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryLaw {
    pi: Vec<f64>,
}

impl StationaryLaw {
    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn mass(&self, set: &StateSet) -> f64 {
        set.members().iter().map(|&x| self.pi[x]).sum()
    }

    pub fn min(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max_y |(pi P)(y) - pi(y)|`.
    pub fn invariance_residual(&self, kernel: &Kernel) -> f64 {
        let row = DVector::from_column_slice(&self.pi).transpose() * kernel.matrix();
        row.iter().zip(&self.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Index<usize> for StationaryLaw {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.pi[i]
    }
}

/// Solves `pi (P - I) = 0`, `sum pi = 1` directly: the last equation of the
/// transposed system is replaced by the normalization row.
pub fn solve_stationary(kernel: &Kernel) -> Result<Vec<f64>, ChainError> {
    let n = kernel.n_states();
    let mut a = kernel.matrix().transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = linalg::solve(a, &b).ok_or(ChainError::Stationary)?;
    let mut pi: Vec<f64> = x.iter().copied().collect();
    let s: f64 = pi.iter().sum();
    if !(s.is_finite() && s > 0.0) {
        return Err(ChainError::Stationary);
    }
    pi.iter_mut().for_each(|p| *p /= s);
    Ok(pi)
}

/// Power iteration on the lazy kernel `(I + P) / 2`, which has the same
/// invariant law and no periodicity. Used as an independent cross-check.
pub fn stationary_power_iteration(kernel: &Kernel, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = kernel.n_states();
    let p = kernel.matrix();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let mut next = vec![0.0; n];
        for x in 0..n {
            let half = 0.5 * v[x];
            next[x] += half;
            for y in 0..n {
                next[y] += half * p[(x, y)];
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|w| *w /= s);
        let diff = linalg::l1(&next, &v);
        v = next;
        if diff < tol {
            break;
        }
    }
    v
}

/// A nonempty subset of `{0, ..., n_states - 1}`, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    n_states: usize,
    members: Vec<usize>,
}

impl StateSet {
    pub fn new<I: IntoIterator<Item = usize>>(n_states: usize, members: I) -> Result<Self, ChainError> {
        let mut m: Vec<usize> = members.into_iter().collect();
        m.sort_unstable();
        m.dedup();
        if m.is_empty() {
            return Err(ChainError::EmptySet);
        }
        if let Some(&bad) = m.iter().find(|&&x| x >= n_states) {
            return Err(ChainError::StateOutOfRange { state: bad, n_states });
        }
        Ok(StateSet { n_states, members: m })
    }

    pub fn singleton(n_states: usize, x: usize) -> Result<Self, ChainError> {
        Self::new(n_states, [x])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() == self.n_states
    }

    /// States outside the set, ascending.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&x| !self.contains(x)).collect()
    }

    pub fn indicator(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_states];
        for &x in &self.members {
            m[x] = true;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReversibilityCheck {
    pub reversible: bool,
    /// `max_{x,y} |pi(x)P(x,y) - pi(y)P(y,x)|`.
    pub residual: f64,
}

/// Outcome of the non-negative definiteness test on `L^2(pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Definiteness {
    NonNegative {
        min_eigenvalue: f64,
    },
    Indefinite {
        min_eigenvalue: f64,
    },
    /// The chain is not reversible, so the symmetrized spectrum says nothing
    /// about `(f, Pf)`.
    NotApplicable {
        reversibility_residual: f64,
    },
}

impl Definiteness {
    pub fn is_nonneg(&self) -> bool {
        matches!(self, Definiteness::NonNegative { .. })
    }
}

/// Spectrum of the kernel on `L^2(pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Eigenvalues of `D^{1/2} P D^{-1/2}`, `D = diag(pi)`; real and sorted
    /// ascending when the chain is reversible.
    pub eigenvalues: Vec<Complex<f64>>,
    /// Largest modulus once the eigenvalue 1 of the constants is removed.
    pub r0: f64,
    pub is_reversible: bool,
    pub is_nonneg_definite: bool,
}

impl SpectralSummary {
    /// The reversible-chain bounds do not apply to this spectrum.
    pub fn reversible_bounds_inapplicable(&self) -> bool {
        !self.is_reversible
    }
}

/// An irreducible finite chain with its stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    kernel: Kernel,
    labels: Option<Vec<String>>,
    pi: StationaryLaw,
}

impl FiniteChain {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, ChainError> {
        Self::from_kernel(Kernel::new(matrix)?)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ChainError> {
        Self::new(matrix_from_rows(rows)?)
    }

    /// Like [`FiniteChain::from_rows`], but rows whose sum is within
    /// [`tol::PARSE_ROW_SUM`] of one are rescaled first.
    pub fn from_rows_renormalized(rows: &[Vec<f64>]) -> Result<Self, ChainError> {
        let mut m = matrix_from_rows(rows)?;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(ChainError::InvalidEntry { row: i, col: j, value: v });
                }
            }
            let sum: f64 = m.row(i).sum();
            if (sum - 1.0).abs() > tol::PARSE_ROW_SUM {
                return Err(ChainError::RowSum { row: i, sum });
            }
        }
        renormalize_rows(&mut m);
        Self::new(m)
    }

    pub fn from_kernel(kernel: Kernel) -> Result<Self, ChainError> {
        kernel.strongly_connected().map_err(|unreachable| ChainError::Reducible { unreachable })?;
        let pi = solve_stationary(&kernel)?;
        if pi.iter().any(|&p| !(p > 0.0)) {
            return Err(ChainError::Stationary);
        }
        let law = StationaryLaw { pi };
        if law.invariance_residual(&kernel) > tol::STRUCTURAL {
            return Err(ChainError::Stationary);
        }
        Ok(FiniteChain { kernel, labels: None, pi: law })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, ChainError> {
        if labels.len() != self.n_states() {
            return Err(ChainError::LabelCount { labels: labels.len(), states: self.n_states() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.kernel.n_states()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.kernel.matrix()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Resolves a state by index or label.
    pub fn resolve_state(&self, token: &str) -> Result<usize, ChainError> {
        if let Some(labels) = &self.labels {
            if let Some(i) = labels.iter().position(|l| l == token) {
                return Ok(i);
            }
        }
        match token.parse::<usize>() {
            Ok(i) if i < self.n_states() => Ok(i),
            Ok(i) => Err(ChainError::StateOutOfRange { state: i, n_states: self.n_states() }),
            Err(_) => Err(ChainError::UnknownLabel(token.into())),
        }
    }

    pub fn stationary(&self) -> &StationaryLaw {
        &self.pi
    }

    /// `||P^n - pi|| = max_x sum_y |P^n(x,y) - pi(y)|` for `n = 0..=n_max`.
    pub fn tv_profile(&self, n_max: usize) -> Vec<f64> {
        let n = self.n_states();
        let p = self.matrix();
        let mut power = DMatrix::<f64>::identity(n, n);
        let mut out = Vec::with_capacity(n_max + 1);
        for step in 0..=n_max {
            out.push(self.distance_to_stationary(&power));
            if step < n_max {
                power = &power * p;
            }
        }
        out
    }

    /// `max_x ||K(x,.) - pi||` for an arbitrary kernel `K`.
    pub fn distance_to_stationary(&self, k: &DMatrix<f64>) -> f64 {
        let pi = self.pi.as_slice();
        (0..k.nrows()).map(|x| (0..k.ncols()).map(|y| (k[(x, y)] - pi[y]).abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn check_reversible(&self, tol: f64) -> ReversibilityCheck {
        let p = self.matrix();
        let pi = self.pi.as_slice();
        let n = self.n_states();
        let mut residual: f64 = 0.0;
        for x in 0..n {
            for y in (x + 1)..n {
                residual = residual.max((pi[x] * p[(x, y)] - pi[y] * p[(y, x)]).abs());
            }
        }
        ReversibilityCheck { reversible: residual <= tol, residual }
    }

    /// `D^{1/2} P D^{-1/2}` with `D = diag(pi)`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let pi = self.pi.as_slice();
        let p = self.matrix();
        DMatrix::from_fn(self.n_states(), self.n_states(), |x, y| libm::sqrt(pi[x]) * p[(x, y)] / libm::sqrt(pi[y]))
    }

    pub fn check_nonneg_definite(&self, tol: f64) -> Definiteness {
        let rev = self.check_reversible(tol::STRUCTURAL);
        if !rev.reversible {
            return Definiteness::NotApplicable { reversibility_residual: rev.residual };
        }
        let min = linalg::symmetric_eigenvalues(&self.symmetrized())[0];
        if min >= -tol {
            Definiteness::NonNegative { min_eigenvalue: min }
        } else {
            Definiteness::Indefinite { min_eigenvalue: min }
        }
    }

    /// `(1/2) max_{x,y} sum_z |P^N(x,z) - P^N(y,z)|`.
    pub fn dobrushin_coefficient(&self, steps: usize) -> f64 {
        let pn = self.kernel.power(steps);
        let n = self.n_states();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for y in (x + 1)..n {
                let d: f64 = (0..n).map(|z| (pn[(x, z)] - pn[(y, z)]).abs()).sum();
                worst = worst.max(d);
            }
        }
        (0.5 * worst).min(1.0)
    }

    /// Spectrum on `L^2(pi)` and the radius `r0` on the mean-zero subspace.
    /// Non-reversible chains get the subdominant modulus of `P` itself and
    /// `is_reversible = false`.
    pub fn spectral_r0(&self) -> Result<SpectralSummary, ChainError> {
        let rev = self.check_reversible(tol::STRUCTURAL);
        if rev.reversible {
            let ev = linalg::symmetric_eigenvalues(&self.symmetrized());
            let (top, rest) = ev.split_last().expect("nonempty spectrum");
            debug_assert!((top - 1.0).abs() < 1e-6);
            let r0 = rest.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let min = ev[0];
            Ok(SpectralSummary {
                eigenvalues: ev.iter().map(|&v| Complex::new(v, 0.0)).collect(),
                r0,
                is_reversible: true,
                is_nonneg_definite: min >= -tol::SPECTRAL,
            })
        } else {
            let mut ev = linalg::eigenvalues(self.matrix()).ok_or(ChainError::Eigen)?;
            let one = ev
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    linalg::modulus(&(a.1 - Complex::new(1.0, 0.0)))
                        .total_cmp(&linalg::modulus(&(b.1 - Complex::new(1.0, 0.0))))
                })
                .map(|(i, _)| i)
                .expect("nonempty spectrum");
            let unit = ev.remove(one);
            let r0 = ev.iter().map(linalg::modulus).fold(0.0, f64::max);
            ev.push(unit);
            Ok(SpectralSummary { eigenvalues: ev, r0, is_reversible: false, is_nonneg_definite: false })
        }
    }

    /// The maximal one-step certificate on `set`: `delta nu(y) = min_{x in
    /// set} P(x,y)`.
    pub fn find_minorization(&self, set: &StateSet) -> Result<MinorizationCertificate, CertificateError> {
        let p = self.matrix();
        let n = self.n_states();
        let floor: Vec<f64> =
            (0..n).map(|y| set.members().iter().map(|&x| p[(x, y)]).fold(f64::INFINITY, f64::min)).collect();
        let delta: f64 = floor.iter().sum();
        if !(delta > 0.0) {
            return Err(CertificateError::ZeroMass);
        }
        let nu = floor.iter().map(|v| v / delta).collect();
        Ok(MinorizationCertificate::new_unchecked(set.clone(), delta.min(1.0), nu))
    }

    /// Maximal groups of states whose rows agree within `tol` (sup norm).
    /// Every state belongs to exactly one group.
    pub fn detect_atoms(&self, tol: f64) -> Vec<StateSet> {
        let n = self.n_states();
        let p = self.matrix();
        let mut assigned = vec![false; n];
        let mut atoms = Vec::new();
        for x in 0..n {
            if assigned[x] {
                continue;
            }
            let mut group = vec![x];
            assigned[x] = true;
            for y in (x + 1)..n {
                if !assigned[y] && (0..n).all(|z| (p[(x, z)] - p[(y, z)]).abs() <= tol) {
                    group.push(y);
                    assigned[y] = true;
                }
            }
            atoms.push(StateSet { n_states: n, members: group });
        }
        atoms
    }

    /// Whether every row in `set` equals the same probability vector.
    pub fn is_atom(&self, set: &StateSet, tol: f64) -> bool {
        let p = self.matrix();
        let first = set.members()[0];
        set.members().iter().all(|&x| (0..self.n_states()).all(|z| (p[(x, z)] - p[(first, z)]).abs() <= tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c2(a: f64, b: f64) -> FiniteChain {
        FiniteChain::from_rows(&[vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap()
    }

    fn rotation() -> FiniteChain {
        FiniteChain::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn two_state_stationary_matches_closed_form() {
        let c = c2(0.3, 0.2);
        let pi = c.stationary();
        // b/(a+b), a/(a+b)
        assert!((pi[0] - 0.2 / 0.5).abs() < 1e-14);
        assert!((pi[1] - 0.3 / 0.5).abs() < 1e-14);
        let sym = c2(0.5, 0.5);
        assert!((sym.stationary()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lenient_rows_rescale_within_tolerance() {
        let c = FiniteChain::from_rows_renormalized(&[vec![0.7, 0.3 + 5e-10], vec![0.2, 0.8]]).unwrap();
        assert!((c.matrix().row(0).sum() - 1.0).abs() < 1e-15);
        assert!(matches!(
            FiniteChain::from_rows_renormalized(&[vec![0.7, 0.3 + 1e-8], vec![0.2, 0.8]]),
            Err(ChainError::RowSum { row: 0, .. })
        ));
        assert!(FiniteChain::from_rows(&[vec![0.7, 0.3 + 5e-10], vec![0.2, 0.8]]).is_err());
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let c = FiniteChain::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.5, 0.2, 0.3], vec![0.3, 0.5, 0.2]]).unwrap();
        for i in 0..3 {
            assert!((c.stationary()[i] - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn power_iteration_agrees_with_direct_solve() {
        let c = FiniteChain::from_rows(&[vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.0, 0.7, 0.3]]).unwrap();
        let pw = stationary_power_iteration(c.kernel(), 1e-15, 100_000);
        assert!(linalg::l1(&pw, c.stationary().as_slice()) < 1e-12);
    }

    #[test]
    fn rejects_reducible_and_non_stochastic() {
        let red = FiniteChain::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert!(matches!(red, Err(ChainError::Reducible { .. })));
        let bad = FiniteChain::from_rows(&[vec![0.6, 0.6], vec![0.5, 0.5]]);
        assert!(matches!(bad, Err(ChainError::RowSum { row: 0, .. })));
        let neg = FiniteChain::from_rows(&[vec![1.1, -0.1], vec![0.5, 0.5]]);
        assert!(matches!(neg, Err(ChainError::InvalidEntry { .. })));
        let ragged = FiniteChain::from_rows(&[vec![1.0], vec![0.5, 0.5]]);
        assert!(matches!(ragged, Err(ChainError::RaggedRow { .. })));
    }

    #[test]
    fn tv_profile_two_state() {
        let c = c2(0.3, 0.2);
        let tv = c.tv_profile(30);
        for (n, v) in tv.iter().enumerate() {
            let expected = 1.2 * libm::pow(0.5, n as f64);
            assert!((v - expected).abs() < 1e-13, "n={n}: {v} vs {expected}");
        }
        assert!(c2(0.5, 0.5).tv_profile(1)[1].abs() < 1e-15);
    }

    #[test]
    fn tv_at_zero_is_twice_one_minus_min_pi() {
        let c = FiniteChain::from_rows(&[vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.0, 0.7, 0.3]]).unwrap();
        let tv0 = c.tv_profile(0)[0];
        assert!((tv0 - 2.0 * (1.0 - c.stationary().min())).abs() < 1e-14);
    }

    #[test]
    fn reversibility() {
        assert!(c2(0.3, 0.2).check_reversible(1e-10).reversible);
        assert!(c2(0.9, 0.05).check_reversible(1e-10).reversible);
        let rot = rotation().check_reversible(1e-10);
        assert!(!rot.reversible);
        assert!((rot.residual - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn definiteness_two_state() {
        assert!(c2(0.3, 0.2).check_nonneg_definite(1e-8).is_nonneg());
        match c2(0.9, 0.9).check_nonneg_definite(1e-8) {
            Definiteness::Indefinite { min_eigenvalue } => assert!((min_eigenvalue + 0.8).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(matches!(rotation().check_nonneg_definite(1e-8), Definiteness::NotApplicable { .. }));
    }

    #[test]
    fn lazy_chain_is_nonneg_definite() {
        let k = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0]);
        let lazy = (DMatrix::identity(3, 3) + k) * 0.5;
        assert!(FiniteChain::new(lazy).unwrap().check_nonneg_definite(1e-8).is_nonneg());
    }

    #[test]
    fn dobrushin_examples() {
        assert!((c2(0.3, 0.2).dobrushin_coefficient(1) - 0.5).abs() < 1e-15);
        assert!(c2(0.5, 0.5).dobrushin_coefficient(1).abs() < 1e-15);
        assert!((rotation().dobrushin_coefficient(1) - 1.0).abs() < 1e-15);
        assert!((c2(0.3, 0.2).dobrushin_coefficient(3) - 0.125).abs() < 1e-14);
    }

    #[test]
    fn r0_examples() {
        let s = c2(0.3, 0.2).spectral_r0().unwrap();
        assert!(s.is_reversible && s.is_nonneg_definite);
        assert!((s.r0 - 0.5).abs() < 1e-12);
        assert!(c2(0.5, 0.5).spectral_r0().unwrap().r0.abs() < 1e-12);
        // lazy walk on the 3-cycle: eigenvalues (1 + cos(2 pi k / 3)) / 2
        let lazy =
            FiniteChain::from_rows(&[vec![0.5, 0.25, 0.25], vec![0.25, 0.5, 0.25], vec![0.25, 0.25, 0.5]]).unwrap();
        assert!((lazy.spectral_r0().unwrap().r0 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn r0_non_reversible_is_flagged() {
        let s = rotation().spectral_r0().unwrap();
        assert!(s.reversible_bounds_inapplicable());
        assert!((s.r0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn minorization_examples() {
        let c = c2(0.3, 0.2);
        let all = StateSet::new(2, [0, 1]).unwrap();
        let cert = c.find_minorization(&all).unwrap();
        assert!((cert.delta() - 0.5).abs() < 1e-15);
        assert!((cert.nu()[0] - 0.4).abs() < 1e-15 && (cert.nu()[1] - 0.6).abs() < 1e-15);
        let single = StateSet::singleton(2, 1).unwrap();
        let cert = c.find_minorization(&single).unwrap();
        assert_eq!(cert.delta(), 1.0);
        assert_eq!(cert.nu(), &[0.2, 0.8]);
        let rot = rotation();
        assert_eq!(rot.find_minorization(&StateSet::new(3, [0, 1]).unwrap()), Err(CertificateError::ZeroMass));
    }

    #[test]
    fn minorization_with_partial_zero_column() {
        let c = FiniteChain::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5], vec![0.3, 0.3, 0.4]]).unwrap();
        let a = StateSet::new(3, [0, 1]).unwrap();
        let cert = c.find_minorization(&a).unwrap();
        assert!((cert.delta() - 0.5).abs() < 1e-15);
        for &x in a.members() {
            for y in 0..3 {
                assert!(c.matrix()[(x, y)] >= cert.delta() * cert.nu()[y] - 1e-15);
            }
        }
    }

    #[test]
    fn atoms() {
        let atoms = c2(0.3, 0.2).detect_atoms(1e-10);
        assert_eq!(atoms.len(), 2);
        let atoms = c2(0.5, 0.5).detect_atoms(1e-10);
        assert_eq!(atoms, vec![StateSet::new(2, [0, 1]).unwrap()]);
        let dup = FiniteChain::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3], vec![0.2, 0.3, 0.5]]).unwrap();
        let atoms = dup.detect_atoms(1e-10);
        assert_eq!(atoms[0], StateSet::new(3, [0, 2]).unwrap());
        assert_eq!(atoms[1], StateSet::new(3, [1]).unwrap());
    }

    #[test]
    fn state_set_validation() {
        assert_eq!(StateSet::new(3, []), Err(ChainError::EmptySet));
        assert!(matches!(StateSet::new(3, [3]), Err(ChainError::StateOutOfRange { .. })));
        let s = StateSet::new(4, [2, 0, 2]).unwrap();
        assert_eq!(s.members(), &[0, 2]);
        assert_eq!(s.complement(), vec![1, 3]);
    }

    #[test]
    fn labels_resolve() {
        let c = c2(0.3, 0.2).with_labels(vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(c.resolve_state("b").unwrap(), 1);
        assert_eq!(c.resolve_state("0").unwrap(), 0);
        assert!(c.resolve_state("z").is_err());
    }
}
