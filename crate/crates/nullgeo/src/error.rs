//! Crate-wide error type with the CLI exit-code mapping.

use crate::expr::ExprError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed spec file: bad JSON, unparsable expressions, inconsistent
    /// dimensions. CLI exit code 2.
    #[error("schema error: {0}")]
    Schema(String),

    /// The spec parsed but violates a geometric invariant (not lightlike,
    /// degenerate screen, failed structure checks). CLI exit code 3.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Numerical breakdown while evaluating (singular solve at a sample
    /// point, domain error in an expression). CLI exit code 4.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) => 2,
            Error::Geometry(_) => 3,
            Error::Numerical(_) => 4,
            Error::Io(_) => 4,
        }
    }

    pub fn geometry(msg: impl Into<String>) -> Error {
        Error::Geometry(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Error {
        Error::Numerical(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Error {
        Error::Schema(msg.into())
    }
}

impl From<ExprError> for Error {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Parse { .. } | ExprError::CoordRange { .. } => Error::Schema(e.to_string()),
            ExprError::Domain(_) => Error::Numerical(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
