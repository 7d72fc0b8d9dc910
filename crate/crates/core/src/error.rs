use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A transcript record that could not be parsed. `line` is 1-based.
    #[error("line {line}: {message}")]
    Record { line: u64, message: String },

    #[error("conversation {conversation_id:?}: duplicate turn_index {turn_index}")]
    DuplicateTurn {
        conversation_id: String,
        turn_index: u64,
    },

    #[error("conversation {conversation_id:?}: {message}")]
    Conversation {
        conversation_id: String,
        message: String,
    },

    #[error("lexicon: {0}")]
    LexiconFormat(String),

    #[error("lexicon category {category:?}, pattern {index}: {message}")]
    Pattern {
        category: String,
        index: usize,
        message: String,
    },

    #[error("utterance index {index} out of range for conversation of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("participation index needs at least 2 speakers, found {0}")]
    TooFewSpeakers(usize),

    #[error("participation index undefined: total count is zero")]
    ZeroTotal,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("embedding provider: {message} (failed batch indices {failed_indices:?})")]
    Provider {
        message: String,
        failed_indices: Vec<usize>,
    },

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no defined values to summarize")]
    NoDefinedValues,

    #[error("report: {0}")]
    Report(String),

    #[error("conversation {conversation_id:?}{}: {source}", utterance.map(|u| format!(", utterance {u}")).unwrap_or_default())]
    InConversation {
        conversation_id: String,
        utterance: Option<usize>,
        #[source]
        source: Box<Error>,
    },

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

    pub(crate) fn in_conversation(self, conversation_id: &str, utterance: Option<usize>) -> Self {
        Error::InConversation {
            conversation_id: conversation_id.to_string(),
            utterance,
            source: Box::new(self),
        }
    }

    /// True when the root cause is the embedding provider rather than the data.
    pub fn is_provider_error(&self) -> bool {
        match self {
            Error::Provider { .. } | Error::DimensionMismatch { .. } => true,
            Error::InConversation { source, .. } => source.is_provider_error(),
            _ => false,
        }
    }
}
