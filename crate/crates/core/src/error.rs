//! Error type shared by all modules of the crate.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument fell outside its admissible domain.
    #[error("domain error: {what} = {value} must be {expected}")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// Two objects that must agree on a dimension do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// An exhaustive operation was asked to run beyond its hard cap.
    #[error("size limit exceeded: {what} = {value}, limit is {limit}")]
    SizeLimit {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    /// A chaotic key violates its construction constraints.
    #[error("invalid key: {0}")]
    InvalidKey(String),

    /// A file or byte stream does not match its declared format.
    #[error("format error in {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
