use clickcfa_neural::NeuralError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error("session {0} has no events before the first answer")]
    EmptyEncoding(String),

    #[error("invalid score: {awarded} awarded out of {max}")]
    InvalidScore { awarded: f64, max: f64 },

    #[error("corpus rejected: {malformed} of {total} lines malformed")]
    CorpusRejected { malformed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("clustering failed: {0}")]
    Clustering(String),

    #[error("training diverged at {stage} {index}: {detail}")]
    Diverged {
        stage: &'static str,
        index: usize,
        detail: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Neural(#[from] NeuralError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True when the error signals numerical divergence during training.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Diverged { .. } | Error::Neural(NeuralError::Diverged(_)))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
