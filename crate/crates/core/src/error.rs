use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes do not conform (conv input vs kernel, checkpoint vs model, ...).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A forward/backward pass or optimizer step produced or received NaN/Inf.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid configuration (bad window, too few patients, unknown region, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Operation called in the wrong state (missing saved context, stage mismatch).
    #[error("state error: {0}")]
    State(String),

    /// Malformed file contents (bad magic, truncated payload, bad CSV row).
    #[error("format error: {0}")]
    Format(String),

    /// A required upstream artifact is missing.
    #[error("dependency error: missing {0}")]
    Dependency(String),

    /// Latent-shift gradient vanished before reaching the target probability.
    #[error("saturation error: {0}")]
    Saturation(String),

    /// A metric denominator is empty; the value is undefined, not zero.
    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
