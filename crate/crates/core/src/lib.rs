//! Exact ergodicity quantities for finite-state Markov chains, and the
//! quantitative uniform-ergodicity and perturbation bounds built on the
//! uniform moments of first hitting times.
//!
//! Everything here is a pure computation over an immutable transition
//! matrix: stationary laws, total-variation profiles, taboo probabilities
//! and first-return laws, geometric moments, split (regenerative) chains,
//! the two-skeleton chain, and every bound as a function of exact inputs.
//! The [`verify`] module turns the bounds into executable soundness checks
//! against the exact oracle.
//!
//! The crate is `no_std` and only needs `alloc`.
//!
//! ```
//! use ergobound::{FiniteChain, StateSet};
//!
//! let chain = FiniteChain::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
//! let pi = chain.stationary();
//! assert!((pi[0] - 0.4).abs() < 1e-12);
//!
//! let profile = chain.tv_profile(3);
//! assert!((profile[1] - 0.6).abs() < 1e-12);
//!
//! let target = StateSet::new(2, [1]).unwrap();
//! let mean = ergobound::hitting::hitting_mean(chain.kernel(), &target).unwrap();
//! assert!((mean[0] - 10.0 / 3.0).abs() < 1e-12);
//! ```
#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod bounds;
pub mod chain;
pub mod error;
pub mod hitting;
pub mod linalg;
pub mod splitting;
pub mod verify;

pub use chain::{Definiteness, FiniteChain, Kernel, ReversibilityCheck, SpectralSummary, StateSet, StationaryLaw};
pub use error::{ChainError, MomentError};
pub use splitting::{MinorizationCertificate, SplitChain, SquaredChain};

pub use nalgebra::{DMatrix, DVector};

/// Numerical tolerances shared by every module.
pub mod tol {
    /// Row sums of a validated kernel.
    pub const ROW_SUM: f64 = 1e-12;
    /// Row sums accepted by the chain file parser before renormalization.
    pub const PARSE_ROW_SUM: f64 = 1e-9;
    /// Entries at or below this are treated as absent edges in the
    /// transition graph.
    pub const EDGE: f64 = 1e-14;
    /// Structural checks: stochasticity, detailed balance, atom detection.
    pub const STRUCTURAL: f64 = 1e-10;
    /// Spectral comparisons.
    pub const SPECTRAL: f64 = 1e-8;
    /// Headroom allowed when comparing a bound against its exact value.
    pub const VIOLATION: f64 = 1e-9;
    /// Tail mass targeted by adaptive series horizons.
    pub const TAIL: f64 = 1e-12;
    /// Hard cap on adaptive horizons.
    pub const MAX_HORIZON: usize = 100_000;
}
