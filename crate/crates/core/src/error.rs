use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Tensor dimensions do not line up for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Spatial size outside the supported range (too small, or upsampling requested).
    #[error("size error: {0}")]
    Size(String),

    /// Weight file does not start with the expected magic or has a bad tag.
    #[error("format error: {0}")]
    Format(String),

    /// Weight file ended before the declared payload of a layer.
    #[error("truncated weight file at layer {layer}: {detail}")]
    Truncated { layer: usize, detail: String },

    /// Structurally well-formed input that violates a model or map rule.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate semantic map: {0}")]
    DegenerateMap(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("cancelled")]
    Cancelled,
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::Size(_)
                | Error::Validation(_)
                | Error::Parameter(_)
                | Error::DegenerateMap(_)
                | Error::Config(_)
        )
    }
}
