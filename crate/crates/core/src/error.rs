use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violates a precondition (non-finite coordinates, too few points, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A scalar argument is out of its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Model or stage configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric range error: {0}")]
    NumericRange(String),

    /// A metric was requested on data that cannot define it.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Parameters passed to a routine that requires time invariance vary over time.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    /// Weight archive does not fit the model it is loaded into.
    #[error("tensor mismatch (first: {first}); offenders: {}", offenders.join(", "))]
    TensorMismatch {
        first: String,
        offenders: Vec<String>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
