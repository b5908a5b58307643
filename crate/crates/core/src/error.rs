use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cable geometry: vehicle {vehicle} coincides with the load")]
    DegenerateGeometry { vehicle: usize },

    #[error("tension system is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("constraint residual {residual:.3e} m exceeds divergence limit at t = {time:.6} s")]
    ConstraintDivergence { residual: f64, time: f64 },

    #[error("non-finite value in {what} at step {step} (t = {time:.6} s)")]
    NonFinite {
        what: String,
        step: usize,
        time: f64,
    },

    #[error("thrust direction singularity: desired thrust points straight down (u3 = {u3:.6})")]
    ThrustSingularity { u3: f64 },

    #[error("desired thrust vector is zero")]
    ZeroThrust,

    #[error("allocation strategy error: {0}")]
    Allocation(String),

    #[error("gains do not stabilize nominal error dynamics (max real part {max_real:.3e})")]
    NotHurwitz { max_real: f64 },

    #[error("no feasible certificate on the search grid (best lambda_max {best_lambda_max:.3e})")]
    Infeasible { best_lambda_max: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("log error: {0}")]
    Log(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
