use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An index was outside its valid range.
    #[error("{what} index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    /// Two objects that must share a shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A named hyperparameter or configuration field is out of its domain.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    /// KL divergence is infinite (the second argument has a zero where the first is positive).
    #[error("KL divergence undefined: {0}")]
    Divergence(String),

    /// A function under evaluation produced NaN or infinity.
    #[error("non-finite evaluation: {0}")]
    Evaluation(String),

    /// Sampling could not produce a valid draw.
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// A batch produced a degenerate quantity (e.g. an all-zero gradient).
    #[error("degenerate batch: {0}")]
    Degenerate(String),

    /// Malformed checkpoint contents.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_index(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index < limit {
        Ok(())
    } else {
        Err(Error::Index { what, index, limit })
    }
}
