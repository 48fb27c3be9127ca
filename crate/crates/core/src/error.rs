use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (negative `s`,
    /// negative density, radius larger than the grid...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration parameter is invalid (non-positive delta, empty list...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The requested computation needs data the object cannot provide.
    #[error("capability error: {0}")]
    Capability(String),

    /// Two ensembles were compared without sharing a Brownian store.
    #[error("coupling error: {0}")]
    Coupling(String),

    /// Explicit time step exceeds the stability limit.
    #[error("CFL violation: dt = {dt:e} exceeds admissible {admissible:e}")]
    Cfl { dt: f64, admissible: f64 },

    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
