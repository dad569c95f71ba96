use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("azimuth grid too coarse: Q = {q} but {needed} directions were requested")]
    InsufficientGrid { q: usize, needed: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("schema error: missing column `{0}`")]
    Schema(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
