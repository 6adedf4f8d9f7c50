use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid error: {0}")]
    Grid(String),

    /// Probability mass reached the walls of the spatial domain.
    #[error("resolution error: {what} (boundary mass {boundary_mass:.3e} > {limit:.1e})")]
    Resolution {
        what: String,
        boundary_mass: f64,
        limit: f64,
    },

    #[error("grid too small: eigenfunction {k} has wall amplitude {amplitude:.3e}")]
    GridTooSmall { k: usize, amplitude: f64 },

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("check failed: {0}")]
    Check(String),

    #[error("missing input: {0}")]
    Missing(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
