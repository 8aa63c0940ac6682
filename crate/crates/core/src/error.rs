use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single broken invariant found while validating a model or attack parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension {
        what: String,
        expected: String,
        found: String,
    },
    NotSymmetric {
        name: String,
        max_asymmetry: f64,
    },
    NotPsd {
        name: String,
        min_eigenvalue: f64,
    },
    NotPositiveDefinite {
        name: String,
        min_eigenvalue: f64,
    },
    ProbabilityOutOfRange {
        name: String,
        value: f64,
    },
    Negative {
        name: String,
        value: f64,
    },
    NonFinite {
        name: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension {
                what,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch in {what}: expected {expected}, found {found}"
            ),
            Violation::NotSymmetric { name, max_asymmetry } => write!(
                f,
                "{name} is not symmetric (max |a_ij - a_ji| = {max_asymmetry:e})"
            ),
            Violation::NotPsd { name, min_eigenvalue } => write!(
                f,
                "{name} is not positive semidefinite (smallest eigenvalue {min_eigenvalue})"
            ),
            Violation::NotPositiveDefinite { name, min_eigenvalue } => write!(
                f,
                "{name} is not positive definite (smallest eigenvalue {min_eigenvalue})"
            ),
            Violation::ProbabilityOutOfRange { name, value } => {
                write!(f, "probability {name} = {value} is outside [0, 1]")
            }
            Violation::Negative { name, value } => write!(f, "{name} = {value} must be nonnegative"),
            Violation::NonFinite { name } => write!(f, "{name} contains non-finite values"),
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", join(.0))]
    InvalidModel(Vec<Violation>),

    #[error("invalid attack parameters: {}", join(.0))]
    InvalidAttack(Vec<Violation>),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// A covariance that must be inverted is singular. `step` is the 1-based
    /// time index when the failure happened inside a recursion.
    #[error("singular covariance in {context}{}", step.map(|k| format!(" at step {k}")).unwrap_or_default())]
    SingularCovariance {
        context: &'static str,
        step: Option<usize>,
    },

    #[error("{context} lost positive semidefiniteness (smallest eigenvalue {min_eigenvalue}){}", step.map(|k| format!(" at step {k}")).unwrap_or_default())]
    NotPsd {
        context: &'static str,
        min_eigenvalue: f64,
        step: Option<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("monte carlo run {run} failed: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach a 1-based step index to numerical failures that lack one.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            Error::SingularCovariance { context, step: None } => Error::SingularCovariance {
                context,
                step: Some(k),
            },
            Error::NotPsd {
                context,
                min_eigenvalue,
                step: None,
            } => Error::NotPsd {
                context,
                min_eigenvalue,
                step: Some(k),
            },
            other => other,
        }
    }

    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularCovariance { .. } | Error::NotPsd { .. } => true,
            Error::Run { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
