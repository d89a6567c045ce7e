use thiserror::Error;

/// Errors raised by the solver and diagnostics.
///
/// The variants map onto the CLI exit codes: configuration and validation
/// problems are `2`, domain and window problems `3`, numeric failures `4`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("window outside domain: {0}")]
    Window(String),
    #[error("point lies on the symmetry axis: {0}")]
    OnAxis(String),
    #[error("unsupported form: {0}")]
    Unsupported(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("numeric failure at step {step}: {reason}")]
    Numeric { step: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Validation(_)
            | Error::Unsupported(_)
            | Error::BadMagic { .. }
            | Error::BadVersion(_)
            | Error::Truncated { .. }
            | Error::Io(_) => 2,
            Error::Domain(_) | Error::Window(_) | Error::OnAxis(_) => 3,
            Error::Numeric { .. } => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
