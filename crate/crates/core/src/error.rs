use std::io;

use thiserror::Error;

/// Errors produced by the `grnlp` crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Conllu { line: usize, message: String },

    #[error("sentence has {len} words, maximum is {max}")]
    SentenceTooLong { len: usize, max: usize },

    #[error("sentence {sentence}: {source}")]
    InSentence {
        sentence: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("head `{head}`: label `{label}` is not in the label vocabulary")]
    UnknownLabel { head: String, label: String },

    #[error("word {word}: gold head {gold} is out of range for a sentence of {len} words")]
    HeadOutOfRange { word: usize, gold: usize, len: usize },

    #[error("missing gold annotation: {0}")]
    MissingGold(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("character `{0}` has no entry in the mapping table")]
    UnmappedCharacter(char),

    #[error("mapping table line {line}: {message}")]
    MappingTable { line: usize, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty data split: {0}")]
    EmptySplit(&'static str),

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("invalid model container: {0}")]
    Container(String),

    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),

    #[error("unsupported container format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("unknown processor `{name}`, valid processors are: {valid}")]
    UnknownProcessor { name: String, valid: String },

    #[error("processor `{0}` listed more than once")]
    DuplicateProcessor(String),

    #[error("missing model for processor `{0}`")]
    MissingModel(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Conllu { .. } => "conllu",
            Error::SentenceTooLong { .. } => "sentence_too_long",
            Error::InSentence { source, .. } => source.code(),
            Error::UnknownLabel { .. } => "unknown_label",
            Error::HeadOutOfRange { .. } => "head_out_of_range",
            Error::MissingGold(_) => "missing_gold",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::UnmappedCharacter(_) => "unmapped_character",
            Error::MappingTable { .. } => "mapping_table",
            Error::EmptyCorpus => "empty_corpus",
            Error::EmptySplit(_) => "empty_split",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::InvalidHyperParams(_) => "invalid_hyperparams",
            Error::Container(_) => "container",
            Error::ChecksumMismatch(_) => "checksum_mismatch",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::UnknownProcessor { .. } => "unknown_processor",
            Error::DuplicateProcessor(_) => "duplicate_processor",
            Error::MissingModel(_) => "missing_model",
            Error::InvalidModel(_) => "invalid_model",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
