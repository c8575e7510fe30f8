use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),
    #[error("true coefficients are required but absent")]
    MissingTruth,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("residual degrees of freedom exhausted: n = {n}, df = {df}")]
    DegreesExhausted { n: usize, df: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid lambda grid parameters: {0}")]
    InvalidGridParams(String),
    #[error("normal quantile argument {0} outside (0, 1)")]
    OutOfDomain(f64),
    #[error("penalty weights must be nonincreasing and nonnegative")]
    WeightsNotSorted,
    #[error("candidate path is empty")]
    EmptyPath,
    #[error("too few observations ({n}) for {folds} folds")]
    TooFewObservations { n: usize, folds: usize },
    #[error("invalid covariance specification: {0}")]
    InvalidCovariance(String),
    #[error("Cholesky factorization failed")]
    CholeskyFailure,
    #[error("signal has zero variance under the covariance")]
    DegenerateSignal,
    #[error("configuration exceeds dimensions: {0}")]
    ConfigExceedsDimensions(String),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("target column `{0}` not found")]
    MissingTarget(String),
    #[error("line {line}: expected {expected} columns, found {found}")]
    UnexpectedColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("degenerate split: {n_train} train / {n_test} test rows")]
    DegenerateSplit { n_train: usize, n_test: usize },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
