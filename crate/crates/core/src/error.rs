use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants split into two families: data/contract problems (domain,
/// schema, coverage, parse, I/O) and numerical failures (rank, solver,
/// inference). [`Error::is_numerical`] tells them apart; the CLI maps the
/// first family to exit code 1 and the second to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("insufficient data: {n} observations for {p} parameters")]
    InsufficientData { n: usize, p: usize },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("coverage error: company {company:?} has no data for year {year}")]
    Coverage { company: String, year: i32 },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("parse error at row {row}, column {column:?}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Rank(_)
                | Error::InsufficientData { .. }
                | Error::SolverFailure(_)
                | Error::Inference(_)
        )
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
