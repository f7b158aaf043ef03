use std::fmt;

/// Error type for fallible library operations.
///
/// Misuse of numeric kernels (shape mismatches, non-finite intermediates)
/// panics with a descriptive message instead; this enum covers conditions a
/// caller can reasonably hit with valid code: bad configs, bad files, and
/// runtime failures of an experiment.
#[derive(Debug)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    Config(String),
    /// A ground-truth center lies outside the assignment grid.
    CenterOutsideGrid { center: (f64, f64), extent: (f64, f64) },
    /// A top-k selection asked for more bins than the grid has.
    TopKExceedsBins { k: usize, bins: usize },
    /// A training step produced a non-finite total loss.
    NonFiniteLoss { scene_id: u64 },
    /// File I/O failed.
    Io(std::io::Error),
    /// JSON parsing or serialization failed.
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::CenterOutsideGrid { center, extent } => write!(
                f,
                "gt center ({}, {}) outside grid extent {} x {}",
                center.0, center.1, extent.0, extent.1
            ),
            Error::TopKExceedsBins { k, bins } => {
                write!(f, "top-k {k} exceeds bin count {bins}")
            }
            Error::NonFiniteLoss { scene_id } => {
                write!(f, "non-finite total loss on scene {scene_id}")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
