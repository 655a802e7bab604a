use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RlsError {
    #[error("matrix is not symmetric positive definite: {0}")]
    NonSpdInput(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(&'static str),

    #[error("singular value decomposition failed to converge")]
    SvdFailure,

    #[error("update requires a scalar measurement, got p = {p}")]
    ScalarOnly { p: usize },

    #[error("window [{start}, {end}] exceeds {len} available regressors")]
    IndexOutOfRange { start: usize, end: usize, len: usize },

    #[error("need at least {needed} regressors, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("strategy {strategy} cannot be used with {operation}")]
    StrategyMismatch {
        strategy: &'static str,
        operation: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, RlsError>;

pub(crate) fn dim_mismatch(context: &'static str, expected: impl ToString, actual: impl ToString) -> RlsError {
    RlsError::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
