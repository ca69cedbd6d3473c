use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum McfError {
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("invalid mask: {0}")]
    Mask(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("bad magic bytes: {0}")]
    BadMagic(String),
    #[error("unsupported version: {0}")]
    BadVersion(u32),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("field mismatch in {field}: {detail}")]
    FieldMismatch { field: String, detail: String },
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl McfError {
    /// Process exit code convention: 2 config, 3 data/io, 4 check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            McfError::Config(_) | McfError::Param(_) => 2,
            McfError::CheckFailed(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, McfError>;
