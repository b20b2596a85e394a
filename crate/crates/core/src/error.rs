use thiserror::Error;

/// Crate-wide error type. Admissibility violations are ordinary data for the
/// iterative solvers (they signal divergence), so they carry the offending
/// values rather than a message.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} violates `{constraint}`")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// The single-body problem has no finite minimizer: `a` must exceed
    /// `a_min` strictly for the current curvature.
    #[error("nonconvexity parameter a = {a} is inadmissible (requires a > {a_min})")]
    Inadmissible { a: f64, a_min: f64 },

    #[error("integrand is not finite at node z = {node}")]
    NonFiniteIntegrand { node: f64 },

    #[error("bisection bracket [{lo}, {hi}] does not straddle the target")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("no positive root found while scanning [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("problem size n = {n} exceeds the supported maximum {max}")]
    SizeLimit { n: usize, max: usize },

    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("i/o failure: {0}")]
    Io(String),

    #[error("malformed instance file: {0}")]
    MalformedFile(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
