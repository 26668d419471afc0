use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("numeric error: {msg} (best residual {residual:.3e})")]
    Numeric { msg: String, residual: f64 },
    #[error("degenerate state: {0}")]
    Degenerate(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad input rather than failed numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Argument(_) | Error::Consistency(_) | Error::Io(_) | Error::Json(_)
        )
    }
}
