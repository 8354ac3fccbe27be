use thiserror::Error;

/// Errors raised by the algebra, kinematics, network and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("outside principal branch: {0}")]
    BranchCut(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported {format} version {found} (expected {expected})")]
    SchemaVersion {
        format: String,
        expected: u32,
        found: u32,
    },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn degenerate<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::DegenerateInput(msg.into()))
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
