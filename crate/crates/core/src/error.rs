use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// One-to-one neuron alignment was requested but the two sides have a
    /// different neuron count.
    #[error("neuron alignment unavailable: {left} vs {right} neurons")]
    AlignmentUnavailable { left: usize, right: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("missing artifact: model={model_id} layer={layer} language={language}")]
    MissingArtifact {
        model_id: String,
        layer: usize,
        language: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
