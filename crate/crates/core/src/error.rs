use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    Ragged {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("local linear fit at t = {t}: {reason}")]
    Fit { t: f64, reason: String },
    #[error("marginal variance nonpositive for series {series} at t = {t}")]
    NonPositiveVariance { series: usize, t: f64 },
    #[error("long-run variance nonpositive for pair ({i}, {l}) at t = {t}")]
    NonPositiveLongRunVariance { i: usize, l: usize, t: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("replication {rep} (seed {seed}) failed: {source}")]
    Replication {
        rep: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Ragged { .. } => "ragged",
            Error::InvalidPanel(_) => "invalid_panel",
            Error::OutOfRange(_) => "out_of_range",
            Error::Fit { .. } => "fit",
            Error::NonPositiveVariance { .. } => "nonpositive_variance",
            Error::NonPositiveLongRunVariance { .. } => "nonpositive_lrv",
            Error::Dimension(_) => "dimension",
            Error::Replication { .. } => "replication",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
