//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by validation, graph operations and I/O.
///
/// Programmer errors (index out of range, mismatched dimensions between values
/// produced by this crate) panic via `assert!` instead; `Error` is reserved for
/// conditions that depend on runtime data.
#[derive(Debug, Error)]
pub enum Error {
    /// A signal instance violates its model contract (entries outside [0,1],
    /// non-isotonic columns under the claimed permutation, bad lambda, ...).
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A configuration value is unusable (zero steps, empty grid, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A threshold grid admits no witness sequence.
    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),

    /// An operation that requires an acyclic comparison graph was called on a
    /// cyclic one.
    #[error("comparison graph has a cycle at this threshold")]
    CyclicGraph,

    /// Generator constraints could not be satisfied (separation condition,
    /// packing collection, ...).
    #[error("generator constraint violated: {0}")]
    Generator(String),

    /// Malformed serialized data.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
