use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed or incomplete input record. `record` is 1-based.
    #[error("{source_name}: record {record}: {message}")]
    Record {
        source_name: String,
        record: usize,
        message: String,
    },

    /// Bad configuration: rule files, gazetteers, schemes, pipeline configs.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a contract (unknown label, foreign span, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("nothing to aggregate: every labeling function abstains on every token")]
    NothingToAggregate,

    /// A pipeline stage failed.
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// The error underneath any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether this error stems from user configuration rather than from data.
    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config(_))
    }

    /// Process exit status: 1 for configuration errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            1
        } else {
            2
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
