use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("bit vector has length {got}, expected {expected}")]
    BitLength { expected: usize, got: usize },

    #[error("target conductance change {target:e} S outside [0, {range:e}] S")]
    TargetOutOfRange { target: f64, range: f64 },

    #[error("channel matrix is rank deficient")]
    RankDeficient,

    #[error("search space of {size} candidates exceeds guard of {limit}")]
    SearchSpace { size: u128, limit: u128 },

    #[error("bound is singular: {0}")]
    Singular(&'static str),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown detector '{0}'")]
    UnknownDetector(String),

    #[error("missing trained parameters for detector '{0}'")]
    MissingParams(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
