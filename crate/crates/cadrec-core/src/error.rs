//! Error type shared by the core modules.

use alloc::string::String;
use core::fmt;

/// Errors raised by core operations. Contract violations (bad dimensions,
/// empty inputs where the caller must provide data) are reported here rather
/// than panicking so the CLI layer can map them to exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Invalid configuration value; the field name is included.
    InvalidConfig { field: &'static str, reason: &'static str },
    /// An id in the input exceeds the declared range.
    IdOutOfRange { kind: &'static str, id: usize, bound: usize },
    /// The corpus or a required subset of it is empty.
    EmptyCorpus,
    /// An operation received an empty list it cannot work with.
    EmptyInput(&'static str),
    /// Matrix or vector dimensions do not line up.
    DimMismatch { context: &'static str, expected: usize, got: usize },
    /// An item list that must be duplicate-free contains a repeat.
    DuplicateItem(u32),
    /// IA and FIA sets overlap on the given item.
    OverlappingItem(u32),
    /// Requested K exceeds the number of rankable candidates.
    KTooLarge { k: usize, candidates: usize },
    /// A gradient or parameter update produced a non-finite value.
    NonFinite { tensor: String },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidConfig { field, reason } => {
                write!(f, "invalid config field `{field}`: {reason}")
            }
            CoreError::IdOutOfRange { kind, id, bound } => {
                write!(f, "{kind} id {id} out of range (must be < {bound})")
            }
            CoreError::EmptyCorpus => write!(f, "interaction corpus is empty"),
            CoreError::EmptyInput(what) => write!(f, "{what} must be nonempty"),
            CoreError::DimMismatch { context, expected, got } => {
                write!(f, "dimension mismatch in {context}: expected {expected}, got {got}")
            }
            CoreError::DuplicateItem(id) => write!(f, "duplicate item id {id} in slice request"),
            CoreError::OverlappingItem(id) => {
                write!(f, "item {id} appears in both the IA and FIA sets")
            }
            CoreError::KTooLarge { k, candidates } => {
                write!(f, "K={k} exceeds the {candidates} rankable candidates")
            }
            CoreError::NonFinite { tensor } => {
                write!(f, "non-finite gradient or update in tensor `{tensor}`")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
