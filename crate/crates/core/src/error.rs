use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForgeError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cannot mix Q(√{0}) with Q(√{1})")]
    FieldMismatch(u64, u64),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid circle map: {0}")]
    InvalidMap(String),
    #[error("laminarity violated: {0} is linked with {1}")]
    NotLaminar(String, String),
    #[error("inconsistent declaration: {0}")]
    Contradiction(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("non-orientable: {0}")]
    NonOrientable(String),
    #[error("inconsistent: {0}")]
    Inconsistent(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ForgeError>;
