use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid index set: {0}")]
    IndexSet(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular system (condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("zero pilot symbol")]
    ZeroPilot,

    #[error("zero symbol recovered at position {0}")]
    ZeroSymbol(usize),

    #[error("factorization precondition violated: {0}")]
    FactorizationPrecondition(String),

    #[error("covariance factor rows {0} do not satisfy the row-independence property")]
    PropertyAViolated(String),

    #[error("{rows} rows exceed the subset enumeration cap of {cap}")]
    TooManyRows { rows: usize, cap: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
