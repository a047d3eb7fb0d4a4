use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("matrix is singular (rcond = {rcond:e})")]
    Singular { rcond: f64 },

    /// The inertia matrix failed the invertibility guard at the given configuration.
    #[error("inertia matrix numerically singular at q = {q:?} (rcond = {rcond:e})")]
    ModelViolation { q: Vec<f64>, rcond: f64 },

    #[error("Lyapunov equation has no positive-definite solution: {0}")]
    NoSolution(String),

    /// θ does not exceed 2‖S‖L, so no decay rate is guaranteed.
    #[error("gain θ = {theta} does not exceed the threshold 2‖S‖L = {threshold}; decay not guaranteed")]
    NotGuaranteed { theta: f64, threshold: f64 },

    #[error("integration diverged at t = {t} (non-finite state)")]
    Divergence { t: f64 },

    #[error("insufficient data: {found} usable samples, at least {required} required")]
    InsufficientData { found: usize, required: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    pub(crate) fn dimension(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Self::DimensionMismatch {
            what: what.into(),
            expected,
            found,
        }
    }

    pub(crate) fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Self::dimension(what, expected, found))
        }
    }
}
