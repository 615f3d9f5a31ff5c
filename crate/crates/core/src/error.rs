use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("p = {p} exceeds the enumeration cap of {cap} spins")]
    EnumerationCap { p: usize, cap: usize },

    #[error("spin index {index} out of range for p = {p}")]
    IndexOutOfRange { index: usize, p: usize },

    /// A moment of degree `degree` was requested from a table that only
    /// holds statistics up to `table_degree`.
    #[error("missing moment: requested degree {degree}, table holds degree <= {table_degree}")]
    MissingMoment { degree: usize, table_degree: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("theory schedule requires explicit confirmation (T = {t}, n = {n})")]
    TheoryUnconfirmed { t: u64, n: u64 },

    #[error("polynomial support of {0} variables exceeds the 64-variable expansion limit")]
    SupportTooLarge(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// Process exit code for the CLI: 2 schema, 3 missing moment,
    /// 4 infeasible configuration, 5 unconfirmed theory schedule, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Json(_) => 2,
            Error::MissingMoment { .. } => 3,
            Error::Infeasible(_) => 4,
            Error::TheoryUnconfirmed { .. } => 5,
            _ => 1,
        }
    }
}
