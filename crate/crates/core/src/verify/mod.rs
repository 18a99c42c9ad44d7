//! Random instances and the exact-oracle harness.
//!
//! [`random_chain`] builds seeded chains with known structure,
//! [`perturb_chain`] produces perturbations with exactly measured
//! `||P~ - P||`, and the submodules turn every bound and identity into a
//! deterministic check: [`soundness`] compares bounds against exact
//! profiles, [`identities`] checks the hitting-time and splitting
//! identities and spectral certificates, and [`audit`] re-checks every
//! feasibility claim independently.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::chain::FiniteChain;
use crate::error::ChainError;
use crate::linalg;
use crate::{DMatrix, StateSet};

pub mod audit;
pub mod identities;
pub mod soundness;

pub use audit::{feasibility_audit, AuditReport};
pub use identities::{identity_suite, IdentityReport};
pub use soundness::{soundness_suite, SoundnessReport, SuiteConfig};

/// Absolute headroom on every bound-versus-exact comparison.
pub const VIOLATION_TOL: f64 = crate::tol::VIOLATION;

/// Seeded generator. Streams separate trials drawn from one seed.
#[derive(Debug, Clone)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        Rng(r)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform on `(0, 1)`.
    pub fn open01(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform on `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        (self.uniform() * n as f64) as usize % n.max(1)
    }

    /// Uniform on `lo..=hi`.
    pub fn between(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn exponential(&mut self) -> f64 {
        -libm::log(self.open01())
    }

    pub fn normal(&mut self) -> f64 {
        let (u, v) = (self.open01(), self.uniform());
        libm::sqrt(-2.0 * libm::log(u)) * libm::cos(2.0 * core::f64::consts::PI * v)
    }

    pub fn choose<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.below(items.len())]
    }

    /// `k` distinct indices from `0..n`, sorted.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k.min(n) {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        let mut out = idx[..k.min(n)].to_vec();
        out.sort_unstable();
        out
    }
}

/// How a random chain is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Construction {
    /// `P(x,y) = w(x,y) / sum_z w(x,z)` for symmetric conductances `w > 0`,
    /// mixed with laziness. Reversible; possibly indefinite.
    RandomReversible,
    /// `l I + (1 - l) K` with `l >= 1/2` and `K` random reversible.
    /// Reversible and non-negative definite.
    LazyReversible,
    /// `K^2` with `K` random reversible. Reversible and non-negative definite.
    SquaredReversible,
    /// Independent random rows. Possibly non-reversible.
    RandomGeneral,
    /// A cyclic rotation mixed with a random kernel. Non-reversible.
    RotationMix,
}

impl Construction {
    pub const ALL: [Construction; 5] = [
        Construction::RandomReversible,
        Construction::LazyReversible,
        Construction::SquaredReversible,
        Construction::RandomGeneral,
        Construction::RotationMix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Construction::RandomReversible => "random_reversible",
            Construction::LazyReversible => "lazy_reversible",
            Construction::SquaredReversible => "squared_reversible",
            Construction::RandomGeneral => "random_general",
            Construction::RotationMix => "rotation_mix",
        }
    }

    pub fn parse(s: &str) -> Option<Construction> {
        let s = s.replace('-', "_");
        Construction::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn is_reversible(self) -> bool {
        matches!(self, Construction::RandomReversible | Construction::LazyReversible | Construction::SquaredReversible)
    }

    pub fn is_nonneg_definite(self) -> bool {
        matches!(self, Construction::LazyReversible | Construction::SquaredReversible)
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRecipe {
    pub n_states: usize,
    pub construction: Construction,
    pub seed: u64,
    /// Weight on the identity in `[0, 1)`. Lazy chains use at least 1/2;
    /// for rotation mixes it is the weight on the random kernel (random
    /// when zero).
    pub laziness: f64,
}

impl ChainRecipe {
    pub fn new(construction: Construction, n_states: usize, seed: u64) -> Self {
        let laziness = if construction == Construction::LazyReversible { 0.5 } else { 0.0 };
        ChainRecipe { n_states, construction, seed, laziness }
    }

    pub fn with_laziness(mut self, laziness: f64) -> Self {
        self.laziness = laziness;
        self
    }
}

fn normalize(rows: &mut [Vec<f64>]) {
    for row in rows.iter_mut() {
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
}

/// Symmetric positive conductances with a per-chain spread exponent, so
/// some chains have near-zero edges.
fn reversible_kernel(rng: &mut Rng, n: usize, positive_diagonal: bool) -> Vec<Vec<f64>> {
    let spread = rng.choose(&[1.0, 2.0, 4.0]);
    let loops = positive_diagonal || rng.uniform() < 0.5;
    let mut w = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in x..n {
            let v = libm::pow(rng.open01(), spread);
            if x == y {
                w[x][x] = if loops { v } else { 0.0 };
            } else {
                w[x][y] = v;
                w[y][x] = v;
            }
        }
    }
    normalize(&mut w);
    w
}

fn mix_identity(rows: &mut [Vec<f64>], laziness: f64) {
    for (x, row) in rows.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v *= 1.0 - laziness;
        }
        row[x] += laziness;
    }
}

fn general_kernel(rng: &mut Rng, n: usize) -> Vec<Vec<f64>> {
    let spread = rng.choose(&[1.0, 3.0, 6.0]);
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| libm::pow(rng.open01(), spread)).collect()).collect();
    normalize(&mut rows);
    rows
}

/// A seeded chain with the recipe's structural guarantees.
///
/// # Panics
/// If `n_states < 2`.
pub fn random_chain(recipe: &ChainRecipe) -> FiniteChain {
    assert!(recipe.n_states >= 2, "random chains need at least two states");
    let n = recipe.n_states;
    let mut rng = Rng::new(recipe.seed);
    let laziness = recipe.laziness.clamp(0.0, 0.999);
    let rows = match recipe.construction {
        Construction::RandomReversible => {
            let mut k = reversible_kernel(&mut rng, n, false);
            mix_identity(&mut k, laziness);
            k
        }
        Construction::LazyReversible => {
            let mut k = reversible_kernel(&mut rng, n, false);
            mix_identity(&mut k, laziness.max(0.5));
            k
        }
        Construction::SquaredReversible => {
            let mut k = reversible_kernel(&mut rng, n, true);
            mix_identity(&mut k, laziness);
            let mut sq = vec![vec![0.0; n]; n];
            for x in 0..n {
                for z in 0..n {
                    sq[x][z] = linalg::compensated_sum((0..n).map(|y| k[x][y] * k[y][z]));
                }
            }
            // K symmetric in L^2(pi) makes K^2 reversible; symmetrize the
            // flow so rounding does not break detailed balance
            let pi = row_stationary(&k);
            for x in 0..n {
                for z in (x + 1)..n {
                    let flow = 0.5 * (pi[x] * sq[x][z] + pi[z] * sq[z][x]);
                    sq[x][z] = flow / pi[x];
                    sq[z][x] = flow / pi[z];
                }
            }
            for x in 0..n {
                let off: f64 = (0..n).filter(|&z| z != x).map(|z| sq[x][z]).sum();
                sq[x][x] = (1.0 - off).max(0.0);
            }
            normalize(&mut sq);
            sq
        }
        Construction::RandomGeneral => {
            let mut k = general_kernel(&mut rng, n);
            mix_identity(&mut k, laziness);
            k
        }
        Construction::RotationMix => {
            let eps = if laziness > 0.0 { laziness } else { 0.05 + 0.45 * rng.uniform() };
            let u = general_kernel(&mut rng, n);
            let mut rows = vec![vec![0.0; n]; n];
            for x in 0..n {
                for y in 0..n {
                    rows[x][y] = eps * u[x][y];
                }
                rows[x][(x + 1) % n] += 1.0 - eps;
            }
            normalize(&mut rows);
            rows
        }
    };
    FiniteChain::from_rows(&rows).expect("random constructions are irreducible")
}

/// Stationary law of a kernel built from reversible conductances: the
/// normalized row weights are not kept, so solve it from the rows.
fn row_stationary(k: &[Vec<f64>]) -> Vec<f64> {
    let chain = FiniteChain::from_rows(k).expect("valid kernel");
    chain.stationary().as_slice().to_vec()
}

/// A perturbed chain and its exact distance to the original.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub chain: FiniteChain,
    /// `max_x sum_y |P~(x,y) - P(x,y)|`.
    pub dp: f64,
    /// The scale actually used after shrinking.
    pub epsilon: f64,
    pub attempts: usize,
}

const MAX_ATTEMPTS: usize = 40;

/// `P~ = P + E` with zero-sum rows of `E` supported on the support of `P`
/// and largest row norm `epsilon`. Negative entries halve `epsilon`, up to
/// a bounded number of attempts.
pub fn perturb_chain(chain: &FiniteChain, epsilon: f64, seed: u64) -> Result<Perturbation, ChainError> {
    let n = chain.n_states();
    let p = chain.matrix();
    if epsilon == 0.0 {
        return Ok(Perturbation { chain: chain.clone(), dp: 0.0, epsilon: 0.0, attempts: 0 });
    }
    let mut rng = Rng::new(seed);
    let mut eps = epsilon.abs();
    for attempt in 1..=MAX_ATTEMPTS {
        let mut e = DMatrix::<f64>::zeros(n, n);
        let mut norms = vec![0.0; n];
        for x in 0..n {
            let support: Vec<usize> = (0..n).filter(|&y| p[(x, y)] > 0.0).collect();
            if support.len() < 2 {
                continue;
            }
            let z: Vec<f64> = support.iter().map(|_| rng.normal()).collect();
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            let l1: f64 = z.iter().map(|v| (v - mean).abs()).sum();
            if !(l1 > 0.0) {
                continue;
            }
            let scale = 0.5 + 0.5 * rng.uniform();
            for (k, &y) in support.iter().enumerate() {
                e[(x, y)] = (z[k] - mean) / l1 * scale;
            }
            norms[x] = scale;
        }
        let top = norms.iter().copied().fold(0.0, f64::max);
        if top == 0.0 {
            return Ok(Perturbation { chain: chain.clone(), dp: 0.0, epsilon: eps, attempts: attempt });
        }
        e *= eps / top;
        let candidate = p + &e;
        let positive = (0..n).all(|x| (0..n).all(|y| p[(x, y)] == 0.0 || candidate[(x, y)] > 0.0));
        if positive {
            let mut m = candidate;
            crate::chain::renormalize_rows(&mut m);
            let perturbed = FiniteChain::new(m)?;
            let dp = linalg::sup_row_l1(perturbed.matrix(), p);
            return Ok(Perturbation { chain: perturbed, dp, epsilon: eps, attempts: attempt });
        }
        eps *= 0.5;
    }
    Err(ChainError::InvalidEntry { row: 0, col: 0, value: -eps })
}

/// `P~ = P + delta` for an explicit zero-row-sum `delta`.
pub fn perturb_with(chain: &FiniteChain, delta: &DMatrix<f64>) -> Result<Perturbation, ChainError> {
    let m = chain.matrix() + delta;
    let perturbed = FiniteChain::new(m)?;
    let dp = linalg::sup_row_l1(perturbed.matrix(), chain.matrix());
    Ok(Perturbation { chain: perturbed, dp, epsilon: dp, attempts: 1 })
}

/// Target sets drawn for one trial: a singleton, a proper subset of size
/// `ceil(n/3)`, and a proper subset of random size, without repeats.
pub fn candidate_sets(rng: &mut Rng, n: usize) -> Vec<StateSet> {
    let mut sets: Vec<Vec<usize>> = Vec::new();
    sets.push(vec![rng.below(n)]);
    let k = n.div_ceil(3).min(n - 1);
    sets.push(rng.subset(n, k));
    let r = rng.between(1, n - 1);
    sets.push(rng.subset(n, r));
    sets.dedup();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for s in sets {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out.into_iter().map(|s| StateSet::new(n, s).expect("indices in range")).collect()
}
