//! Minorization certificates, the split (regenerative) chain, and the
//! two-skeleton chain with its transferred certificate.
//!
//! Split-chain states are indexed `x` for the level-0 copy `(x, 0)` and
//! `n + x` for the level-1 copy `(x, 1)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::chain::{renormalize_rows, FiniteChain, Kernel, StateSet};
use crate::error::ChainError;
use crate::linalg;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateError {
    /// `sum_y min_{x in A} P(x, y) = 0`: no one-step certificate on `A`.
    ZeroMass,
    /// `P(x, y) < delta nu(y)` for some `x in A`.
    Violated {
        x: usize,
        y: usize,
        entry: f64,
        floor: f64,
    },
    /// `nu` is not a probability vector or `delta` is outside `(0, 1]`.
    NotProbability {
        sum: f64,
    },
    InvalidDelta(f64),
    DimensionMismatch {
        nu: usize,
        n_states: usize,
    },
    /// `delta = 1`: `A` is an atom and needs no splitting.
    Atomic,
    /// A level-0 row of the split kernel came out negative.
    NegativeRow {
        row: usize,
        col: usize,
        value: f64,
    },
    /// `delta^2 nu(A) = 0`: the squared chain inherits no certificate.
    DegenerateTransfer,
    Chain(ChainError),
}

impl fmt::Display for CertificateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertificateError::ZeroMass => write!(f, "minorization infeasible: column minima over A sum to zero"),
            CertificateError::Violated { x, y, entry, floor } => {
                write!(f, "certificate violated: P({x},{y}) = {entry} < delta nu({y}) = {floor}")
            }
            CertificateError::NotProbability { sum } => write!(f, "nu sums to {sum} or has a negative entry"),
            CertificateError::InvalidDelta(d) => write!(f, "delta = {d} outside (0, 1]"),
            CertificateError::DimensionMismatch { nu, n_states } => {
                write!(f, "nu has {nu} entries for {n_states} states")
            }
            CertificateError::Atomic => {
                write!(f, "delta = 1: the set is an atom, use the atomic bounds instead of splitting")
            }
            CertificateError::NegativeRow { row, col, value } => {
                write!(f, "split kernel entry ({row},{col}) = {value} is negative")
            }
            CertificateError::DegenerateTransfer => {
                write!(f, "delta^2 nu(A) = 0: squared chain has no transferred certificate")
            }
            CertificateError::Chain(e) => write!(f, "{e}"),
        }
    }
}

impl From<ChainError> for CertificateError {
    fn from(e: ChainError) -> Self {
        CertificateError::Chain(e)
    }
}

/// `(A, delta, nu)` with `P(x, .) >= delta nu(.)` for every `x in A`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorizationCertificate {
    set: StateSet,
    delta: f64,
    nu: Vec<f64>,
}

impl MinorizationCertificate {
    /// Validates a user-supplied certificate entrywise against the chain.
    pub fn new(chain: &FiniteChain, set: StateSet, delta: f64, nu: Vec<f64>) -> Result<Self, CertificateError> {
        let n = chain.n_states();
        if nu.len() != n || set.n_states() != n {
            return Err(CertificateError::DimensionMismatch { nu: nu.len(), n_states: n });
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(CertificateError::InvalidDelta(delta));
        }
        let sum: f64 = nu.iter().sum();
        if nu.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > tol::STRUCTURAL {
            return Err(CertificateError::NotProbability { sum });
        }
        let cert = Self::new_unchecked(set, delta, nu);
        cert.check(chain.kernel())?;
        Ok(cert)
    }

    /// Builds a certificate without checking it. `delta` within
    /// [`tol::ROW_SUM`] of one is snapped to one.
    pub fn new_unchecked(set: StateSet, delta: f64, nu: Vec<f64>) -> Self {
        let delta = if delta > 1.0 - tol::ROW_SUM { 1.0 } else { delta };
        MinorizationCertificate { set, delta, nu }
    }

    /// Entrywise check of `P(x, y) >= delta nu(y)` on `A`.
    pub fn check(&self, kernel: &Kernel) -> Result<(), CertificateError> {
        let p = kernel.matrix();
        for &x in self.set.members() {
            for (y, &v) in self.nu.iter().enumerate() {
                let floor = self.delta * v;
                if p[(x, y)] < floor - tol::ROW_SUM {
                    return Err(CertificateError::Violated { x, y, entry: p[(x, y)], floor });
                }
            }
        }
        Ok(())
    }

    pub fn set(&self) -> &StateSet {
        &self.set
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn is_atomic(&self) -> bool {
        self.delta == 1.0
    }

    /// `nu(A)`.
    pub fn nu_mass(&self) -> f64 {
        self.set.members().iter().map(|&x| self.nu[x]).sum()
    }
}

/// `mu*`: on the level-0 copy `(1 - delta) mu` on `A` and `mu` off `A`;
/// on the level-1 copy `delta mu` on `A`.
pub fn split_measure(mu: &[f64], cert: &MinorizationCertificate) -> Vec<f64> {
    let n = mu.len();
    let d = cert.delta();
    let mut out = vec![0.0; 2 * n];
    for x in 0..n {
        if cert.set().contains(x) {
            out[x] = (1.0 - d) * mu[x];
            out[n + x] = d * mu[x];
        } else {
            out[x] = mu[x];
        }
    }
    out
}

/// `(mu*)` marginalized back to the base space.
pub fn marginalize(v: &[f64]) -> Vec<f64> {
    let n = v.len() / 2;
    (0..n).map(|x| v[x] + v[n + x]).collect()
}

/// The split kernel on `X x {0, 1}` together with its atom `A_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitChain {
    base_states: usize,
    cert: MinorizationCertificate,
    kernel: Kernel,
    split_pi: Vec<f64>,
    atom: StateSet,
    labels: Option<Vec<String>>,
}

/// Builds the split kernel:
/// `(x, 0), x not in A` gets `P(x, .)*`; `(x, 0), x in A` gets
/// `(P(x, .)* - delta nu*) / (1 - delta)`; every `(x, 1)` gets `nu*`.
/// The level-1 states outside `A_1` keep their `nu*` rows but are never
/// entered.
pub fn build_split_chain(chain: &FiniteChain, cert: &MinorizationCertificate) -> Result<SplitChain, CertificateError> {
    if cert.is_atomic() {
        return Err(CertificateError::Atomic);
    }
    cert.check(chain.kernel())?;
    let n = chain.n_states();
    let d = cert.delta();
    let nu_star = split_measure(cert.nu(), cert);
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for x in 0..n {
        let row = split_measure(&chain.kernel().row(x), cert);
        for j in 0..2 * n {
            m[(x, j)] = if cert.set().contains(x) { (row[j] - d * nu_star[j]) / (1.0 - d) } else { row[j] };
            m[(n + x, j)] = nu_star[j];
        }
    }
    for i in 0..2 * n {
        for j in 0..2 * n {
            let v = m[(i, j)];
            if v < 0.0 {
                // rounding of an exactly tight certificate
                if v >= -tol::STRUCTURAL {
                    m[(i, j)] = 0.0;
                } else {
                    return Err(CertificateError::NegativeRow { row: i, col: j, value: v });
                }
            }
        }
    }
    renormalize_rows(&mut m);
    let kernel = Kernel::new(m)?;
    let split_pi = split_measure(chain.stationary().as_slice(), cert);
    let atom = StateSet::new(2 * n, cert.set().members().iter().map(|&a| n + a))?;
    let labels = chain
        .labels()
        .map(|ls| ls.iter().map(|l| format!("{l}#0")).chain(ls.iter().map(|l| format!("{l}#1"))).collect());
    Ok(SplitChain { base_states: n, cert: cert.clone(), kernel, split_pi, atom, labels })
}

impl SplitChain {
    pub fn base_states(&self) -> usize {
        self.base_states
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn cert(&self) -> &MinorizationCertificate {
        &self.cert
    }

    /// `A_1 = A x {1}`.
    pub fn atom(&self) -> &StateSet {
        &self.atom
    }

    /// `pi*`.
    pub fn split_pi(&self) -> &[f64] {
        &self.split_pi
    }

    /// Level-1 copies of states outside `A`: zero `pi*` mass, never entered.
    pub fn dead_states(&self) -> Vec<usize> {
        let n = self.base_states;
        (0..n).filter(|x| !self.cert.set().contains(*x)).map(|x| n + x).collect()
    }

    /// `X_0` followed by `A_1`, in index order.
    pub fn reachable(&self) -> Vec<usize> {
        let n = self.base_states;
        (0..n).chain(self.cert.set().members().iter().map(|&a| n + a)).collect()
    }

    /// Whether every dead state has zero inbound probability.
    pub fn dead_states_unreachable(&self) -> bool {
        let p = self.kernel.matrix();
        self.dead_states().iter().all(|&j| (0..2 * self.base_states).all(|i| p[(i, j)] == 0.0))
    }

    /// `max |pi* P_split - pi*|`.
    pub fn invariance_residual(&self) -> f64 {
        let p = self.kernel.matrix();
        let m = 2 * self.base_states;
        (0..m)
            .map(|j| {
                let s = linalg::compensated_sum((0..m).map(|i| self.split_pi[i] * p[(i, j)]));
                (s - self.split_pi[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `max_{i,j} |pi*(i) P(i,j) - pi*(j) P(j,i)|` over reachable states.
    pub fn reversibility_residual(&self) -> f64 {
        let p = self.kernel.matrix();
        let r = self.reachable();
        let mut worst: f64 = 0.0;
        for &i in &r {
            for &j in &r {
                worst = worst.max((self.split_pi[i] * p[(i, j)] - self.split_pi[j] * p[(j, i)]).abs());
            }
        }
        worst
    }

    /// The chain restricted to its communicating class `X_0 u A_1`. The
    /// reachable rows carry no mass to dead states, so this is again a
    /// stochastic matrix. Indices follow [`SplitChain::reachable`].
    pub fn reachable_chain(&self) -> Result<FiniteChain, ChainError> {
        let r = self.reachable();
        let mut m = linalg::restrict(self.kernel.matrix(), &r, &r);
        renormalize_rows(&mut m);
        let chain = FiniteChain::new(m)?;
        match &self.labels {
            Some(ls) => chain.with_labels(r.iter().map(|&i| ls[i].clone()).collect()),
            None => Ok(chain),
        }
    }

    /// The atom `A_1` in the indexing of [`SplitChain::reachable_chain`].
    pub fn reachable_atom(&self) -> StateSet {
        let n = self.base_states;
        StateSet::new(n + self.cert.set().len(), n..n + self.cert.set().len()).expect("nonempty set")
    }
}

/// `P^2` with the certificate `(A, delta^2 nu(A), nu)`, and when `A` is an
/// atom of `P` also the atom measure `nu_bar = nu(A) nu + sum_{y not in A}
/// nu(y) P(y, .)` of `P^2`. The squared kernel may be reducible (periodic
/// `P`), so it is kept as a bare kernel with the inherited `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredChain {
    pub kernel: Kernel,
    pub pi: Vec<f64>,
    pub cert: MinorizationCertificate,
    pub atom_measure: Option<Vec<f64>>,
}

impl SquaredChain {
    pub fn delta_bar(&self) -> f64 {
        self.cert.delta()
    }

    pub fn as_chain(&self) -> Result<FiniteChain, ChainError> {
        FiniteChain::from_kernel(self.kernel.clone())
    }
}

pub fn squared_chain(chain: &FiniteChain, cert: &MinorizationCertificate) -> Result<SquaredChain, CertificateError> {
    cert.check(chain.kernel())?;
    let delta_bar = cert.delta() * cert.delta() * cert.nu_mass();
    if !(delta_bar > 0.0) {
        return Err(CertificateError::DegenerateTransfer);
    }
    let kernel = chain.kernel().squared();
    let p = chain.matrix();
    let n = chain.n_states();
    let atom_measure = chain.is_atom(cert.set(), tol::STRUCTURAL).then(|| {
        let nu = cert.nu();
        let na = cert.nu_mass();
        (0..n)
            .map(|z| na * nu[z] + (0..n).filter(|y| !cert.set().contains(*y)).map(|y| nu[y] * p[(y, z)]).sum::<f64>())
            .collect()
    });
    let transferred = MinorizationCertificate::new_unchecked(cert.set().clone(), delta_bar, cert.nu().to_vec());
    Ok(SquaredChain { kernel, pi: chain.stationary().as_slice().to_vec(), cert: transferred, atom_measure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hitting;

    fn c2() -> FiniteChain {
        FiniteChain::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap()
    }

    fn full_cert() -> MinorizationCertificate {
        c2().find_minorization(&StateSet::new(2, [0, 1]).unwrap()).unwrap()
    }

    #[test]
    fn split_measure_of_pi() {
        let cert = full_cert();
        let v = split_measure(&[0.4, 0.6], &cert);
        for (a, b) in v.iter().zip([0.2, 0.3, 0.2, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(marginalize(&v), vec![0.4, 0.6]);
    }

    #[test]
    fn split_measure_atomic_limit_and_outside_support() {
        let c = FiniteChain::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5], vec![0.3, 0.3, 0.4]]).unwrap();
        let cert = c.find_minorization(&StateSet::new(3, [0, 1]).unwrap()).unwrap();
        assert_eq!(split_measure(&[0.0, 0.0, 1.0], &cert), vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let atom = MinorizationCertificate::new_unchecked(StateSet::singleton(3, 1).unwrap(), 1.0, c.kernel().row(1));
        assert_eq!(split_measure(&[0.2, 0.5, 0.3], &atom), vec![0.2, 0.0, 0.3, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn split_chain_two_state() {
        let c = c2();
        let s = build_split_chain(&c, &full_cert()).unwrap();
        let p = s.kernel().matrix();
        // (P(0,.)* - 0.5 nu*) / 0.5 with P(0,.)* = (0.35, 0.15 | 0.35, 0.15)
        let expected0 = [0.5, 0.0, 0.5, 0.0];
        for j in 0..4 {
            assert!((p[(0, j)] - expected0[j]).abs() < 1e-14);
        }
        let nu_star = [0.2, 0.3, 0.2, 0.3];
        for i in 2..4 {
            for j in 0..4 {
                assert!((p[(i, j)] - nu_star[j]).abs() < 1e-14);
            }
        }
        let atom_mass: f64 = s.atom().members().iter().map(|&i| s.split_pi()[i]).sum();
        assert!((atom_mass - 0.5).abs() < 1e-14);
        assert!(s.invariance_residual() < 1e-14);
        assert!(s.dead_states().is_empty());
    }

    #[test]
    fn split_marginality() {
        let c = FiniteChain::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5], vec![0.3, 0.3, 0.4]]).unwrap();
        let cert = c.find_minorization(&StateSet::new(3, [0, 1]).unwrap()).unwrap();
        let s = build_split_chain(&c, &cert).unwrap();
        assert_eq!(s.dead_states(), vec![5]);
        assert!(s.dead_states_unreachable());
        let mu = [0.1, 0.6, 0.3];
        let mut base = mu.to_vec();
        let mut split = split_measure(&mu, &cert);
        for _ in 0..50 {
            base = (0..3).map(|y| (0..3).map(|x| base[x] * c.matrix()[(x, y)]).sum()).collect();
            split = (0..6).map(|j| (0..6).map(|i| split[i] * s.kernel().matrix()[(i, j)]).sum()).collect();
            assert!(linalg::l1(&marginalize(&split), &base) < 1e-12);
        }
        let r = s.reachable_chain().unwrap();
        assert_eq!(r.n_states(), 5);
        for (i, &idx) in s.reachable().iter().enumerate() {
            assert!((r.stationary()[i] - s.split_pi()[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn split_rejects_atoms_and_bad_certificates() {
        let c = c2();
        let atom = c.find_minorization(&StateSet::singleton(2, 0).unwrap()).unwrap();
        assert_eq!(build_split_chain(&c, &atom), Err(CertificateError::Atomic));
        let bad = MinorizationCertificate::new(&c, StateSet::new(2, [0, 1]).unwrap(), 0.9, vec![0.4, 0.6]);
        assert!(matches!(bad, Err(CertificateError::Violated { .. })));
        let ok = MinorizationCertificate::new(&c, StateSet::new(2, [0, 1]).unwrap(), 0.3, vec![0.5, 0.5]).unwrap();
        assert!(build_split_chain(&c, &ok).is_ok());
    }

    #[test]
    fn split_moment_inequality_two_state() {
        let c = c2();
        let cert = full_cert();
        let s = build_split_chain(&c, &cert).unwrap();
        let lambda = 1.1;
        let split_moments = hitting::geometric_moments(s.kernel(), s.atom(), lambda).unwrap();
        let base = hitting::geometric_moments(c.kernel(), cert.set(), lambda).unwrap();
        let d = cert.delta();
        let denom = 1.0 - (1.0 - d) * base.l;
        assert!(denom > 0.0);
        for x in 0..2 {
            assert!(split_moments.tau_moment[x] <= d * base.tau_moment[x] / denom + 1e-12);
        }
    }

    #[test]
    fn squared_transfer() {
        let c = c2();
        let sq = squared_chain(&c, &full_cert()).unwrap();
        assert!((sq.delta_bar() - 0.25).abs() < 1e-15);
        assert!(sq.atom_measure.is_none());
        sq.cert.check(&sq.kernel).unwrap();
        let atom = c.find_minorization(&StateSet::singleton(2, 1).unwrap()).unwrap();
        let sq = squared_chain(&c, &atom).unwrap();
        let nu_bar = sq.atom_measure.clone().unwrap();
        assert!((nu_bar[0] - 0.30).abs() < 1e-15 && (nu_bar[1] - 0.70).abs() < 1e-15);
        for z in 0..2 {
            assert!((nu_bar[z] - sq.kernel.matrix()[(1, z)]).abs() < 1e-15);
        }
        assert!((sq.delta_bar() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn squared_transfer_degenerate() {
        let rot = FiniteChain::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let cert = rot.find_minorization(&StateSet::singleton(3, 0).unwrap()).unwrap();
        assert_eq!(squared_chain(&rot, &cert), Err(CertificateError::DegenerateTransfer));
    }
}
