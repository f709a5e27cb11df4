use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("label noise sigma must be positive when the training set is non-empty")]
    DegenerateLikelihood,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("ridgeless degenerate case: alpha = {alpha} >= 1 with zero bare ridge")]
    RidgelessDegenerate { alpha: f64 },

    #[error("deterministic equivalent of the noise variance diverges: alpha * m2 = {0} >= 1")]
    NoiseVarianceDiverges(f64),

    #[error("ridge solver failed to converge (residual {residual:e})")]
    RidgeNotConverged { residual: f64 },

    #[error("factorization failed: matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("every reward is -inf or NaN; softmax weights undefined")]
    NoFiniteReward,

    #[error("no records")]
    NoRecords,

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("no question has at least {k} samples")]
    NotEnoughSamples { k: usize },

    #[error("csv schema violation: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
