use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rank {rank} out of range for sample size {n}")]
    RankOutOfRange { rank: usize, n: usize },

    #[error("rank order violated: expected r < s, got r={r}, s={s}")]
    RankOrder { r: usize, s: usize },

    #[error("quadrature did not converge (estimated error {error:e})")]
    Quadrature { error: f64 },

    #[error("phase-1 samples are heterogeneous: {0}")]
    HeterogeneousSamples(String),

    #[error("degenerate control limits: estimated variance of the mean is {0}")]
    DegenerateLimits(f64),

    #[error("limits do not match the scenario: {0}")]
    LimitsMismatch(String),

    #[error("no exceedances in {replications} replications; ARL lower bound {lower_bound}")]
    Censored { replications: u64, lower_bound: f64 },

    #[error("calibration bracket failure: {0}")]
    BracketFailure(String),

    #[error("replication budget too small: {0}")]
    BudgetTooSmall(String),

    #[error("missing cells: {0}")]
    MissingCells(String),

    #[error("dataset too small: need {needed} records, have {have}")]
    DatasetTooSmall { needed: usize, have: usize },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
