use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A spatial or temporal argument fell outside the domain of the map.
    #[error("{what} = {value} is outside {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    /// The point sits on the front curve, where the solution has two one-sided limits.
    #[error("y = {y} lies on the front y_C(t) = {front} at t = {t}")]
    OnFront { y: f64, t: f64, front: f64 },

    /// A finite-difference stencil would straddle a discontinuity.
    #[error("grid point (y = {y}, t = {t}) is too close to {feature}")]
    TooClose { y: f64, t: f64, feature: &'static str },

    /// An iterative method did not reach its tolerance.
    #[error("no convergence in {method}: {detail}")]
    NonConvergence { method: &'static str, detail: String },

    #[error("ODE step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("{path}:{line}: {msg}")]
    Data {
        path: String,
        line: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn non_convergence(method: &'static str, detail: impl Into<String>) -> Self {
        Error::NonConvergence {
            method,
            detail: detail.into(),
        }
    }

    /// True for failures of a numerical method rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::StepUnderflow { .. }
        )
    }
}
