use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across dataset generation, kernel evaluation, NC1 and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Zero-norm input under a ReLU kernel with zero bias variance; the angle is undefined.
    #[error("degenerate input at column {index}: zero pre-activation norm leaves the ReLU angle undefined")]
    DegenerateInput { index: usize },

    #[error("normalized correlation {value} lies outside [-1, 1] beyond the clamp tolerance")]
    CorrelationOutOfRange { value: f64 },

    #[error("malformed partition: {0}")]
    Partition(String),

    #[error("between-class trace {0:e} is at or below the degeneracy floor")]
    DegenerateBetweenVariance(f64),

    #[error("within-class trace {0:e} is negative beyond the PSD tolerance")]
    NegativeWithinVariance(f64),

    #[error("degenerate denominator ({0:e}) in predictor")]
    DegenerateDenominator(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("arcsin derivative is near-singular: |u| = {0}")]
    NearSingularDerivative(f64),

    #[error("EoS did not converge at factor #{factor_index} (d1 = {factor}): residual {residual:e}")]
    NonConvergence {
        factor_index: usize,
        factor: f64,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("training diverged at step {step}: loss {loss:e}")]
    Diverged { step: usize, loss: f64 },

    #[error("unknown verify suite `{0}`")]
    UnknownSuite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
