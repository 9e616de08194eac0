use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("ambiguous ground truth: {0}")]
    Ambiguous(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("unsupported configuration: {0}")]
    Config(String),
    #[error("asset error: {0}")]
    Asset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}: {source}")]
    Record {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
