use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or configuration parameter violates its constraints.
    #[error("invalid parameter: {0}")]
    Validation(String),

    #[error("index {index} out of range (valid: {lo}..={hi})")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("time {time:.6e} s outside recorded window [{start:.6e}, {end:.6e}] s")]
    OutsideWindow { time: f64, start: f64, end: f64 },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("empty image")]
    EmptyImage,

    #[error("zero variance in region of interest")]
    ZeroVariance,

    #[error("quadrature did not converge at x = {x:.4e} m, z = {z:.4e} m (change {change:.3e} rad)")]
    NonConvergent { x: f64, z: f64, change: f64 },

    #[error("resource guard: {0}")]
    ResourceLimit(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::IndexOutOfRange { .. } | Error::Mismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
