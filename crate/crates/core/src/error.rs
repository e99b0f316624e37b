//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type. Variants map onto the failure categories the
/// operations promise: parse/schema errors from loaders, configuration errors
/// from bad settings, capability errors from scorers that cannot do what was
/// asked, and so on.
#[derive(Debug, Error)]
pub enum Error {
    /// A data row could not be parsed. Carries the 1-based row number.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// A file's header or record layout does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// An invalid setting, option, or argument.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid input to an operation (bad span, empty text, purity violation).
    #[error("input error: {0}")]
    Input(String),

    /// The scorer or sampler cannot perform the requested operation.
    #[error("capability error: {0}")]
    Capability(String),

    /// An enumeration or resource cap would be exceeded.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A required external resource (weights, checkpoint) is unavailable.
    #[error("environment error: {0}")]
    Environment(String),

    /// Training could not proceed (e.g. single-label corpus).
    #[error("training error: {0}")]
    Train(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
