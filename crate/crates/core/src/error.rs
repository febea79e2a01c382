use thiserror::Error;

/// Errors raised by problem construction, operators and the solver.
#[derive(Debug, Error)]
pub enum DeconvError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dense oracle size guard exceeded: {size} > {limit}")]
    SizeGuard { size: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed image: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DeconvError> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(DeconvError::Dimension(msg.into()))
}

pub(crate) fn ensure_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return dim_err(format!("{name} has length {got}, expected {want}"));
    }
    Ok(())
}
