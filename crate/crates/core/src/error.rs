use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("reality violation: {0}")]
    Reality(String),

    #[error("degenerate direction: triad undefined for k = 0")]
    DegenerateDirection,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("argument out of grid: {0}")]
    OutOfGrid(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),

    #[error("frequency bin at omega = 0 is excluded: {0}")]
    ExcludedBin(String),

    #[error("singular propagator at k = {k:?}, omega = {omega}")]
    Singular { k: [f64; 3], omega: f64 },

    #[error("integration step too large: dt = {dt} exceeds 0.1 / omega_max = {limit}")]
    Stability { dt: f64, limit: f64 },

    #[error("iteration diverged at order {order}: sup-norm grew from {from:.3e} to {to:.3e}")]
    Divergence {
        order: usize,
        from: f64,
        to: f64,
        history: Vec<crate::solver::OrderRecord>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
