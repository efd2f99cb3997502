use std::fmt;

/// Library-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    Domain(String),
    /// Fixed-point iteration hit its iteration cap. Carries the last
    /// sup-norm residual so callers can report diagnostics.
    Unconverged { iterations: usize, residual: f64 },
    /// Root scan found no sign change; carries the scanned (β, L(β,0)) pairs.
    NoRoot(Vec<(f64, f64)>),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Unconverged {
                iterations,
                residual,
            } => write!(
                f,
                "not converged after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::NoRoot(samples) => write!(
                f,
                "no sign change of L(beta,0) in bracket ({} samples scanned)",
                samples.len()
            ),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
