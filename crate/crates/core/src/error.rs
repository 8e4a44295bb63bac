use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("mirror symmetry violated: max deviation {deviation:e} exceeds {tolerance:e}")]
    Symmetry { deviation: f64, tolerance: f64 },

    #[error("imaginary residue {residue:e} exceeds {tolerance:e}")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    #[error("diffusion time {t} outside {range}")]
    TimeRange { t: f64, range: &'static str },

    #[error("non-finite {what} at {location}")]
    NonFinite { what: &'static str, location: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Value(_) | Error::TimeRange { .. } => "value",
            Error::Symmetry { .. } | Error::ImaginaryResidue { .. } => "spectral",
            Error::NonFinite { .. } => "numeric",
            Error::Data(_) | Error::Csv(_) => "data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Context { source, .. } => source.category(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
