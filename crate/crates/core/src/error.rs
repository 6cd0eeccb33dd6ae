use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// The CLI maps these onto exit codes: [`Error::NonFinite`] is a numerical
/// failure, [`Error::Config`] a usage failure, everything else a data failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("tensor format: {0}")]
    Format(String),

    #[error("conllu line {line}: {msg}")]
    Conllu { line: usize, msg: String },

    #[error("no sentence in conllu input")]
    NoSentence,

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
