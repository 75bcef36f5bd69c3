use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// AUC needs at least one positive and one negative. Noisy protocols can
    /// also land here when the aggregated counts collapse.
    #[error("AUC undefined with {positives} positives and {negatives} negatives")]
    UndefinedAuc { positives: f64, negatives: f64 },

    #[error("client reports were computed on different threshold grids")]
    GridMismatch,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("all {trials} trials failed (last error: {last})")]
    AllTrialsFailed { trials: usize, last: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
