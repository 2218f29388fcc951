use thiserror::Error;

/// Crate-wide error type.
///
/// Every fallible operation distinguishes schema problems (bad JSON shape),
/// domain problems (values that parse but violate model preconditions), and
/// resource problems (enumeration caps). Callers that need an exit code can
/// rely on this split: schema/domain errors are user errors, caps are a
/// deliberate refusal to compute, and numerical errors indicate a model that
/// passed validation but defeated a downstream algorithm.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file or JSON that does not match the model schema.
    #[error("schema: {0}")]
    Schema(String),

    /// Structurally valid input that violates a documented precondition.
    #[error("domain: {0}")]
    Domain(String),

    /// An enumeration would exceed its hard cap; never silently truncated.
    #[error("cap exceeded: {what} requires n = {n}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        n: usize,
        cap: usize,
    },

    /// A numerical routine failed (non-convergence, singular system, ...).
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
