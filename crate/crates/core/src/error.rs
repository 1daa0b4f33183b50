use std::path::PathBuf;

/// Errors produced by the augmentation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed sweep: {0}")]
    Format(String),

    #[error("invalid point at record {index}: {reason}")]
    InvalidPoint { index: usize, reason: &'static str },

    #[error("invalid calibration: {0}")]
    Calibration(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("particle sampling failed: {0}")]
    Sampling(String),

    #[error("total internal reflection (sin of refracted angle = {0})")]
    TotalInternalReflection(f64),

    #[error("multiple-reflection series diverges (rho_0 * R_water = {0})")]
    Divergence(f64),

    #[error("lookup failed: {0}")]
    Lookup(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
