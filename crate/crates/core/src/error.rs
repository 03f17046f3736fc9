use std::path::PathBuf;

/// Errors produced anywhere in the stabilization toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("geometry mismatch: expected {expected}, got {got}")]
    GeometryMismatch { expected: String, got: String },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("value {value} at index {index} exceeds sanity bound {bound}")]
    OutOfBounds { index: usize, value: f32, bound: f32 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("unsupported {what} version {found} (expected {expected})")]
    UnsupportedVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("non-finite {statistic} in layer {layer}")]
    NonFiniteGradient { layer: String, statistic: &'static str },

    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-friendly category name, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) => "geometry",
            Error::GeometryMismatch { .. } => "geometry_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::InvalidInput(_) => "invalid_input",
            Error::Format { .. } => "format",
            Error::UnsupportedVersion { .. } => "version",
            Error::Config(_) => "config",
            Error::Degenerate(_) => "degenerate",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
