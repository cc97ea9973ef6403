use thiserror::Error;

/// Errors raised by the numerical core and its serializers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular locus: dividend rate equals premium rate (|mu - c| = {gap:e})")]
    SingularLocus { gap: f64 },

    #[error("integrand not finite at s = {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("singular least-squares design: {0}")]
    SingularDesign(&'static str),

    #[error("indeterminate classification: {0}")]
    Indeterminate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible trajectory: fitted intercept {intercept} is not below premium rate {mu}")]
    InfeasibleTrajectory { intercept: f64, mu: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
