use thiserror::Error;

/// Errors raised anywhere in the extraction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("token id {id} outside vocabulary of size {size}")]
    Lookup { id: usize, size: usize },

    #[error("{golds} gold triples exceed the slot budget of {slots}; increase num_generated_triples")]
    Capacity { slots: usize, golds: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("schema error at line {line}: {detail}")]
    Schema { line: usize, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }

    /// True for failures caused by non-finite values or ill-posed arithmetic.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Domain { .. })
    }

    /// True for failures caused by malformed or missing input data.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Schema { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Lookup { .. }
                | Error::Capacity { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
