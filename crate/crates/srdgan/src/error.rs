use std::path::PathBuf;

/// Error taxonomy shared by every module. The CLI maps these onto its
/// fixed exit codes: config/spec problems → 2, data problems → 3,
/// numeric failures → 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(PathBuf),

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("state error: {0}")]
    State(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("numeric error at iteration {iteration}: {detail}")]
    Numeric { iteration: u64, detail: String },

    #[error("validation failed:\n{}", issues.join("\n"))]
    Validation { issues: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
