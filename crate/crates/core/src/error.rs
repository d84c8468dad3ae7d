use std::path::PathBuf;

/// Errors produced anywhere in the training laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of bounds or unknown.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Table, task or trajectory dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A non-finite value appeared in a loss, ratio or gradient.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A precondition on an operation's input was violated.
    #[error("invalid input: {0}")]
    Input(String),
    /// A trajectory does not follow the think / no-think response format.
    #[error("format violation: {0}")]
    Format(String),
    /// A line-delimited record could not be decoded.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    /// A pipeline stage failed.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
