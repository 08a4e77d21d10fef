use thiserror::Error;

/// Errors raised by the iterator, the linear-algebra engine and the harnesses.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid gain schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid compact family: {0}")]
    InvalidCompacts(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: u64 },

    #[error("unknown problem `{0}` (expected one of: linear, cubic, logistic, rotation)")]
    UnknownProblem(String),

    #[error("invalid parameters for problem `{problem}`: {reason}")]
    InvalidParams { problem: String, reason: String },

    #[error("non-finite matrix entry in {0}")]
    NonFiniteMatrix(&'static str),

    #[error("matrix is not stable: eigenvalue {re} {sign} {im}i has non-positive real part")]
    Unstable { re: f64, im: f64, sign: char },

    #[error(
        "gamma*A - I/2 is not positive definite (minimal eigenvalue {min_eigenvalue}); \
         the alpha = 1 limit requires it"
    )]
    RegimeBoundary { min_eigenvalue: f64 },

    #[error("symmetric part of A is not positive definite (minimal eigenvalue {min_eigenvalue})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("series did not converge after {terms} terms (last relative term {last_ratio:e})")]
    SeriesNotConverged { terms: usize, last_ratio: f64 },

    #[error(
        "running exponential product drifted by {deviation:e} from direct evaluation at k = {k}"
    )]
    FactorDrift { k: usize, deviation: f64 },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid ensemble configuration: {0}")]
    InvalidEnsemble(String),
}

impl Error {
    pub(crate) fn unstable(re: f64, im: f64) -> Self {
        Error::Unstable {
            re,
            im: im.abs(),
            sign: if im < 0.0 { '-' } else { '+' },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
