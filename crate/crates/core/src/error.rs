use std::path::PathBuf;

use crate::codec::{RenderMode, TokenId};

/// Errors raised anywhere in the linking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("title `{name}` ({lang}) is shared by `{first}` and `{second}`")]
    DuplicateTitle {
        name: String,
        lang: String,
        first: String,
        second: String,
    },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("invalid entity id: {0}")]
    InvalidEntityId(String),
    #[error("invalid language code `{0}`: expected 2-12 lowercase ASCII letters or hyphens")]
    InvalidLanguage(String),

    #[error("name `{0}` contains the identifier separator \" >> \"")]
    SeparatorInName(String),
    #[error("empty name")]
    EmptyName,
    #[error("cannot parse `{0}` as a {1:?} identifier")]
    UnparseableIdentifier(String, RenderMode),
    #[error("token sequence contains reserved token id {0}")]
    ReservedTokenInSequence(TokenId),
    #[error("token id {0} is not a Unicode scalar value")]
    InvalidToken(TokenId),

    #[error("cannot insert an empty token sequence into the trie")]
    EmptySequence,
    #[error("token sequence is not a complete identifier in the trie")]
    NotAnIdentifier,
    #[error("corrupt trie file at byte {offset}: {reason}")]
    CorruptTrieFile { offset: usize, reason: String },
    #[error("{what} version mismatch: file has {found}, expected {expected}")]
    VersionMismatch {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("not a {0} file (bad magic bytes)")]
    BadMagic(&'static str),

    #[error("scorer has an empty vocabulary")]
    UntrainedModel,
    #[error("token {0} is outside the scorer vocabulary")]
    TokenOutsideVocab(TokenId),
    #[error("target token sequence is empty")]
    EmptyTarget,
    #[error("no training pairs")]
    EmptyCorpus,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("cannot decode over an empty trie")]
    EmptyTrie,
    #[error("{count} identifiers exceed the exhaustive ranking bound of {bound}")]
    TooManyIdentifiers { count: usize, bound: usize },
    #[error("hypothesis is not finished")]
    UnfinishedHypothesis,
    #[error("decoding produced no finished hypothesis within the step budget")]
    NoHypotheses,

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("mention and markers need {needed} tokens but the budget is {budget}")]
    MentionTooLong { needed: usize, budget: usize },
    #[error("entity `{0}` has no names")]
    EntityHasNoNames(String),
    #[error("instance on line {0} has no gold entity")]
    MissingGold(usize),
    #[error("invalid bucket edges: {0}")]
    InvalidBuckets(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("binary encoding: {0}")]
    Encoding(#[from] bincode::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
