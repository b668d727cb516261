use core::fmt;

/// Errors produced by the numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter violated its documented domain.
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    /// Adaptive quadrature ran out of panels before reaching tolerance.
    Quadrature {
        value: f64,
        error_estimate: f64,
        panels: usize,
    },
    /// No sign change could be located for a root.
    Bracket {
        what: &'static str,
        lo: f64,
        hi: f64,
    },
    /// Iteration budget exhausted.
    NoConvergence { what: &'static str, iterations: usize },
    /// Requested value lies outside what the routine can represent.
    OutOfRange { what: &'static str, value: f64 },
    /// The likelihood is not finite (zero or underflowing conditional variance).
    DegenerateLikelihood { conditional_variance: f64 },
    /// Regression slope outside (0, 1): the series is not mean reverting.
    CalibrationFailure { slope: f64, observations: usize },
    /// Two series that must share a time axis do not.
    Alignment { left: usize, right: usize },
    /// Input that must be strictly increasing is not.
    Unsorted { index: usize },
    /// Timestamps are not evenly spaced.
    NonUniform { index: usize },
    /// Not enough observations.
    InsufficientData { needed: usize, got: usize },
    /// Computed thresholds violate the ordering the theory guarantees.
    Ordering { what: &'static str },
    /// A discrete grid was too coarse or too narrow to resolve the answer.
    Resolution { what: &'static str },
    /// Every candidate in a search failed.
    AllCandidatesFailed { attempted: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter {
                name,
                value,
                reason,
            } => write!(f, "invalid parameter {name} = {value}: {reason}"),
            Error::Quadrature {
                value,
                error_estimate,
                panels,
            } => write!(
                f,
                "quadrature did not converge after {panels} panels (value {value:e}, error estimate {error_estimate:e})"
            ),
            Error::Bracket { what, lo, hi } => {
                write!(f, "could not bracket {what} within [{lo}, {hi}]")
            }
            Error::NoConvergence { what, iterations } => {
                write!(f, "{what} did not converge in {iterations} iterations")
            }
            Error::OutOfRange { what, value } => write!(f, "{what} out of range: {value}"),
            Error::DegenerateLikelihood {
                conditional_variance,
            } => write!(
                f,
                "degenerate likelihood: conditional variance {conditional_variance:e}"
            ),
            Error::CalibrationFailure {
                slope,
                observations,
            } => write!(
                f,
                "series is not mean reverting: AR(1) slope {slope} over {observations} observations"
            ),
            Error::Alignment { left, right } => {
                write!(f, "series are not aligned: {left} vs {right} observations")
            }
            Error::Unsorted { index } => write!(f, "input not strictly increasing at index {index}"),
            Error::NonUniform { index } => write!(f, "non-uniform time step at index {index}"),
            Error::InsufficientData { needed, got } => {
                write!(f, "need at least {needed} observations, got {got}")
            }
            Error::Ordering { what } => write!(f, "threshold ordering violated: {what}"),
            Error::Resolution { what } => write!(f, "grid resolution insufficient: {what}"),
            Error::AllCandidatesFailed { attempted } => {
                write!(f, "all {attempted} candidates failed")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
