//! Crate-wide error type.

/// Errors reported by mesh construction, space selection, operators and the
/// experiment runner. Variants carry a human-readable context string with the
/// offending values, so messages can be surfaced directly by the CLI and FFI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Mesh size or geometry parameters out of range.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    /// Requested function space family/order combination is not supported on
    /// the given mesh.
    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),
    /// An operation received fields or spaces defined on incompatible meshes
    /// or spaces.
    #[error("mismatched operands: {0}")]
    Mismatch(String),
    /// A non-finite value was produced or supplied.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// A linear solver failed to reach its tolerance.
    #[error("solver failure: {0}")]
    Solver(String),
    /// Division by a density below the safety threshold.
    #[error("density guard: {0}")]
    DensityGuard(String),
    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),
    /// File I/O error from the runner.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// JSON (de)serialisation error.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
