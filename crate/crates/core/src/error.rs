use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("the zero polynomial has no well-defined zero count")]
    ZeroPolynomial,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance embedding failed: {0}")]
    Embedding(String),

    #[error("no successes at horizon T = {horizon}; the curve was truncated there")]
    Extinction { horizon: f64 },

    #[error("splitting stage {stage} at level {level} has no survivors")]
    LevelExtinction { stage: usize, level: f64 },

    #[error("quadrature did not reach tolerance {target:e} (estimated error {achieved:e})")]
    Convergence { target: f64, achieved: f64 },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
