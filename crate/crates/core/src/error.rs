use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain mismatch: expected {expected} data, got {found}")]
    Domain { expected: &'static str, found: &'static str },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("insufficient ACS for calibration: need at least {min_pe1}x{min_pe2}, have {have_pe1}x{have_pe2}")]
    InsufficientAcs { min_pe1: usize, min_pe2: usize, have_pe1: usize, have_pe2: usize },

    #[error("normal matrix is rank deficient (pivot {pivot} at column {column}); use lambda > 0")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("invalid state: {0}")]
    State(String),

    #[error("training diverged at level {level}, epoch {epoch}: loss = {loss}")]
    Divergence { level: usize, epoch: usize, loss: f64 },

    #[error("replica {index} failed: {source}")]
    Replica {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format { path: path.into(), reason: reason.to_string() }
    }

    /// True for errors caused by bad inputs rather than by a failed computation or I/O.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Dimension(_)
            | Error::Domain { .. }
            | Error::Degenerate(_)
            | Error::Spec(_)
            | Error::InsufficientAcs { .. } => true,
            Error::Replica { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format { .. } => true,
            Error::Replica { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
