use thiserror::Error;

use crate::heap::{ObjectRef, RootId};
use crate::recorder::TypeId;

/// Errors raised by the heap, the sampler and the recorder.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GcError {
    #[error("out of memory: cannot reserve {requested} bytes (heap limit {limit} bytes)")]
    OutOfMemory { requested: u64, limit: u64 },
    #[error("invalid object reference {0}")]
    InvalidReference(ObjectRef),
    #[error("field {index} out of bounds for an object of {len} payload words")]
    FieldOutOfBounds { index: usize, len: usize },
    #[error("type id {0} is not registered")]
    UnknownType(TypeId),
    #[error("type registry is full")]
    TypeRegistryFull,
    #[error("root {0} is not live")]
    StaleRoot(RootId),
    #[error("sampling period must be positive")]
    ZeroPeriod,
    #[error("pop_frame on an empty shadow stack")]
    ShadowStackUnderflow,
    #[error("heap corruption: {0}")]
    Corruption(String),
    #[error("invalid heap configuration: {0}")]
    InvalidConfig(String),
}

/// Errors raised while decoding a binary profile stream.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("bad magic at offset 0")]
    BadMagic,
    #[error("unsupported profile version {0}")]
    UnsupportedVersion(u16),
    #[error("stream truncated at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("expected META record at byte offset {offset}")]
    MissingMeta { offset: usize },
    #[error("invalid {field} at byte offset {offset}")]
    InvalidField { offset: usize, field: &'static str },
    #[error("record at byte offset {offset} declares {declared} payload bytes but uses {used}")]
    PayloadLength {
        offset: usize,
        declared: usize,
        used: usize,
    },
}
