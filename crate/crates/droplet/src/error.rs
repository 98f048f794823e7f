//! Error type shared by all modules.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Parameter outside its admissible range (μ₊ > 0, μ₋ ∈ (0,1), F > 0, ...).
    InvalidParams(String),
    /// A mask violates a domain invariant or belongs to another domain.
    InvalidMask(String),
    /// Two masks were combined that live on different grids.
    MismatchedDomains { left_cells: usize, right_cells: usize },
    /// An operation that requires a nonempty mask received an empty one.
    EmptyMask,
    /// Conjugate gradient did not reach the residual target.
    SolverDiverged { residual: f64, iterations: usize },
    /// The wet region reached the truncation box during growth.
    DomainTooSmall { step: Option<usize> },
    /// Brute-force enumeration was asked for more than 22 candidate cells.
    TooManyCandidates { count: usize },
    /// A brute-force candidate cell is not flippable (obstacle, boundary ring, ...).
    InvalidCandidate { cell: usize },
    /// Pointwise ordering precondition v0 ≤ v1 failed.
    OrderingViolated { cell: usize, v0: f64, v1: f64 },
    /// ζ is only defined for positive arguments.
    ZetaDomain { s: f64 },
    /// Initial radial state lies outside the admissible region.
    OutsideRegion { radius: f64, forcing: f64 },
    /// A time step of a run failed; carries the failing index.
    StepFailed { index: usize, source: Box<Error> },
    /// Scenario configuration problem, with the offending field.
    Config { field: String, message: String },
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::InvalidMask(msg) => write!(f, "invalid mask: {msg}"),
            Error::MismatchedDomains { left_cells, right_cells } => write!(
                f,
                "masks live on different domains ({left_cells} vs {right_cells} cells)"
            ),
            Error::EmptyMask => write!(f, "operation requires a nonempty mask"),
            Error::SolverDiverged { residual, iterations } => write!(
                f,
                "harmonic solve did not converge: residual {residual:.3e} after {iterations} iterations"
            ),
            Error::DomainTooSmall { step: Some(k) } => {
                write!(f, "wet region reached the truncation box at step {k}; enlarge the domain")
            }
            Error::DomainTooSmall { step: None } => {
                write!(f, "wet region touches the truncation box; enlarge the domain")
            }
            Error::TooManyCandidates { count } => {
                write!(f, "brute force limited to 22 candidate cells, got {count}")
            }
            Error::InvalidCandidate { cell } => {
                write!(f, "cell {cell} cannot be flipped (obstacle or boundary ring)")
            }
            Error::OrderingViolated { cell, v0, v1 } => {
                write!(f, "ordering v0 <= v1 fails at cell {cell}: {v0} > {v1}")
            }
            Error::ZetaDomain { s } => write!(f, "zeta requires s > 0, got {s}"),
            Error::OutsideRegion { radius, forcing } => write!(
                f,
                "initial state (R={radius}, F={forcing}) lies outside the admissible region"
            ),
            Error::StepFailed { index, source } => write!(f, "step {index} failed: {source}"),
            Error::Config { field, message } => write!(f, "config field `{field}`: {message}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::StepFailed { source, .. } => Some(source),
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
