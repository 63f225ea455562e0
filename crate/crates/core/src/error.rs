use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported preset: Q = {0} (presets exist for Q = 2 and Q = 3)")]
    UnsupportedPreset(usize),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("Lorentzian response is singular at element {element}, bin {bin}")]
    Singularity { element: usize, bin: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
