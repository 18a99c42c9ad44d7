use alloc::string::String;
use core::fmt;

/// Rejection of a transition matrix or state set at construction time.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainError {
    Empty,
    NotSquare {
        rows: usize,
        cols: usize,
    },
    RaggedRow {
        row: usize,
        len: usize,
        expected: usize,
    },
    InvalidEntry {
        row: usize,
        col: usize,
        value: f64,
    },
    RowSum {
        row: usize,
        sum: f64,
    },
    Reducible {
        unreachable: usize,
    },
    LabelCount {
        labels: usize,
        states: usize,
    },
    EmptySet,
    StateOutOfRange {
        state: usize,
        n_states: usize,
    },
    UnknownLabel(String),
    /// The stationary linear system was singular or produced an invalid law.
    Stationary,
    /// An eigenvalue routine failed to converge.
    Eigen,
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::Empty => write!(f, "transition matrix has no states"),
            ChainError::NotSquare { rows, cols } => {
                write!(f, "transition matrix is {rows}x{cols}, expected square")
            }
            ChainError::RaggedRow { row, len, expected } => {
                write!(f, "row {row} has {len} entries, expected {expected}")
            }
            ChainError::InvalidEntry { row, col, value } => {
                write!(f, "entry ({row},{col}) = {value} is not a probability")
            }
            ChainError::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            ChainError::Reducible { unreachable } => {
                write!(f, "chain is reducible: state {unreachable} is not in the communicating class of state 0")
            }
            ChainError::LabelCount { labels, states } => {
                write!(f, "{labels} labels given for {states} states")
            }
            ChainError::EmptySet => write!(f, "state set is empty"),
            ChainError::StateOutOfRange { state, n_states } => {
                write!(f, "state {state} out of range for {n_states} states")
            }
            ChainError::UnknownLabel(l) => write!(f, "unknown state label {l:?}"),
            ChainError::Stationary => write!(f, "stationary distribution solve failed"),
            ChainError::Eigen => write!(f, "eigenvalue computation did not converge"),
        }
    }
}

/// Failure of a hitting-time functional.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentError {
    /// `lambda * rho(Q) >= 1`: the generating function diverges.
    Divergent {
        lambda: f64,
        taboo_radius: f64,
    },
    /// The absorbing system `(I - s Q)` is singular.
    Singular,
    /// The target set covers the whole space.
    FullSet,
    /// A parameter is outside the domain of the functional.
    Domain {
        name: &'static str,
        value: f64,
    },
    Eigen,
    /// A truncated series disagrees with its closed form.
    Truncated {
        horizon: usize,
        residual: f64,
    },
}

impl fmt::Display for MomentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentError::Divergent { lambda, taboo_radius } => {
                write!(f, "moment diverges: lambda {lambda} times taboo spectral radius {taboo_radius} is not below 1")
            }
            MomentError::Singular => write!(f, "absorbing linear system is singular"),
            MomentError::FullSet => write!(f, "target set is the whole state space"),
            MomentError::Domain { name, value } => write!(f, "{name} = {value} out of domain"),
            MomentError::Eigen => write!(f, "eigenvalue computation did not converge"),
            MomentError::Truncated { horizon, residual } => {
                write!(f, "series truncated at {horizon} terms is off its closed form by {residual}")
            }
        }
    }
}
