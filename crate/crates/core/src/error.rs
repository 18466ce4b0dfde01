use std::path::PathBuf;

/// Errors raised by the solver and its I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field is not divergence-free (relative residual {0:.3e})")]
    NotSolenoidal(f64),

    #[error("CFL limit exceeded: dt*|v|_inf*n/L = {courant:.3} > 1; reduce dt below {dt_max:.3e}")]
    Cfl { courant: f64, dt_max: f64 },

    #[error("integration failed at t = {t}: {detail}")]
    Integration { t: f64, detail: String },

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
