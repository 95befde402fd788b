use thiserror::Error;

use crate::gp::KernelParams;
use crate::selection::LooReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },

    #[error("objective function returned a non-finite value for option {0}")]
    Oracle(usize),

    #[error("invalid choice observation: {0}")]
    InvalidChoice(String),

    #[error("cholesky factorisation failed (last jitter {jitter:e})")]
    Factorization { jitter: f64 },

    #[error("chosen set of size {size} exceeds the inclusion-exclusion cap {cap}")]
    Combinatorial { size: usize, cap: usize },

    #[error("ELBO became non-finite at step {step}")]
    Divergence {
        step: usize,
        last_finite: Box<KernelParams>,
    },

    #[error("sampler initialisation failed: {0}")]
    Initialization(String),

    #[error("input outside the problem domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("latent dimension selection failed at n_e = {n_e}: {source}")]
    PartialSelection {
        n_e: usize,
        completed: Vec<LooReport>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
