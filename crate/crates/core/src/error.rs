use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability distribution: {0}")]
    InvalidPmf(String),

    #[error("alphabet of {alphabet} symbols does not fit a 2^{precision} frequency table")]
    AlphabetTooLarge { alphabet: usize, precision: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("context overflow: {len} positions requested, limit is {limit}")]
    ContextOverflow { len: usize, limit: usize },

    #[error("payload truncated while decoding symbol {symbol_index}")]
    Truncated { symbol_index: usize },

    #[error("model mismatch: interval exhausted while decoding symbol {symbol_index}")]
    ModelMismatch { symbol_index: usize },

    #[error("archive was written with model `{archive}`, but `{given}` was supplied")]
    ModelIdMismatch { archive: String, given: String },

    #[error("chunk {index}: {source}")]
    Chunk {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed archive: {0}")]
    Archive(String),

    #[error("malformed model table: {0}")]
    ModelTable(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("protocol version mismatch: client speaks v{ours}, peer speaks v{theirs}")]
    VersionMismatch { ours: u32, theirs: u32 },

    #[error("sidecar error [{code}]: {message}")]
    Remote { code: String, message: String },

    #[error("model `{model}` reserves no byte tokens; byte-domain evaluation is not possible")]
    ByteDomainUnsupported { model: String },

    #[error("non-finite log-probability at position {position}")]
    NonFinite { position: usize },

    #[error("corpus error at {path}: {message}")]
    Corpus { path: PathBuf, message: String },

    #[error("integrity failure for {path}: manifest says {expected} bytes, file has {actual}")]
    Integrity {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("temporal report: {0}")]
    Temporal(String),

    #[error("document {id}: {source}")]
    Document {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn in_chunk(self, index: usize) -> Self {
        Error::Chunk {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_document(self, id: &str) -> Self {
        Error::Document {
            id: id.to_owned(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPmf(_) => "invalid_pmf",
            Error::AlphabetTooLarge { .. } => "alphabet_too_large",
            Error::InvalidConfig(_) => "invalid_config",
            Error::ContextOverflow { .. } => "context_overflow",
            Error::Truncated { .. } => "truncated",
            Error::ModelMismatch { .. } => "model_mismatch",
            Error::ModelIdMismatch { .. } => "model_id_mismatch",
            Error::Chunk { source, .. } | Error::Document { source, .. } => source.kind(),
            Error::Archive(_) => "archive",
            Error::ModelTable(_) => "model_table",
            Error::UnknownModel(_) => "unknown_model",
            Error::Protocol(_) => "protocol",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Remote { .. } => "remote",
            Error::ByteDomainUnsupported { .. } => "byte_domain_unsupported",
            Error::NonFinite { .. } => "non_finite",
            Error::Corpus { .. } => "corpus",
            Error::Integrity { .. } => "integrity",
            Error::Temporal(_) => "temporal",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True when the failure stems from bad input or flags rather than a bug
    /// or an environment fault.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Chunk { source, .. } | Error::Document { source, .. } => {
                source.is_user_error()
            }
            Error::Io { source, .. } => matches!(
                source.kind(),
                std::io::ErrorKind::NotFound
                    | std::io::ErrorKind::PermissionDenied
                    | std::io::ErrorKind::IsADirectory
                    | std::io::ErrorKind::NotADirectory
            ),
            Error::Protocol(_)
            | Error::Remote { .. }
            | Error::VersionMismatch { .. } => false,
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn user_errors_are_told_apart() {
        assert!(Error::UnknownModel("x".into()).is_user_error());
        assert!(Error::InvalidConfig("x".into()).in_document("d").is_user_error());
        assert!(!Error::Protocol("x".into()).in_chunk(2).is_user_error());
        let missing = Error::io("reading x", std::io::Error::from(std::io::ErrorKind::NotFound));
        assert!(missing.is_user_error());
        let broken = Error::io("writing x", std::io::Error::from(std::io::ErrorKind::BrokenPipe));
        assert!(!broken.is_user_error());
        assert_eq!(Error::Truncated { symbol_index: 0 }.in_chunk(1).kind(), "truncated");
    }
}
