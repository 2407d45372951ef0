use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("point {index} lies outside the box")]
    OutsideBox { index: usize },

    #[error("empty point set")]
    EmptySet,

    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),

    #[error("exact star discrepancy needs ~{work:.3e} operations, budget is {budget:.3e}; use the heuristic")]
    BudgetExceeded { work: f64, budget: f64 },

    #[error("split value {value} is not strictly inside ({lo}, {hi})")]
    InvalidSplit { value: f64, lo: f64, hi: f64 },

    #[error("sample {row} lies outside the estimation domain")]
    SampleOutsideDomain { row: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix of component {0} is not positive definite")]
    NotPositiveDefinite(usize),

    #[error("degenerate truncation: acceptance rate {rate:.3e} over {draws} probe draws")]
    DegenerateTruncation { rate: f64, draws: usize },

    #[error("reference density vanishes at every leaf center")]
    ZeroReferenceNorm,

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
