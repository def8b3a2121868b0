use thiserror::Error;

use crate::vocab::TokenId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("vocabulary size mismatch: expected {expected}, got {got}")]
    VocabMismatch { expected: usize, got: usize },

    #[error("token id {id} is outside the vocabulary (size {vocab})")]
    UnknownTokenId { id: TokenId, vocab: usize },

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("session already terminated")]
    Terminated,

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("malformed frame: {0}")]
    Wire(String),

    #[error("handshake refused: {0}")]
    HandshakeRefused(String),

    #[error("timed out waiting for peer")]
    Timeout,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
