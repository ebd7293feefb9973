use crate::layout::WordAddress;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("word address {0:?} out of range (capacity {1})")]
    AddressOutOfRange(WordAddress, u64),
    #[error("descriptor slot {0} out of range ({1} slots)")]
    SlotOutOfRange(usize, usize),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("operation unsupported on this backend: {0}")]
    UnsupportedBackend(&'static str),
    #[error("malformed descriptor in slot {slot}: {reason}")]
    MalformedDescriptor { slot: usize, reason: String },
    #[error("read-word wait bound exceeded at {0:?}")]
    ReadTimeout(WordAddress),
    #[error("invalid heap configuration: {0}")]
    Config(String),
    #[error("invalid heap file: {0}")]
    Format(String),
    #[error("harness error: {0}")]
    Harness(String),
    #[error("model-check instance too large: {0}")]
    InstanceTooLarge(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
