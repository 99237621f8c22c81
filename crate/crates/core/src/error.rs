use thiserror::Error;

/// Errors surfaced by the simulation and quadrature layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature did not converge: achieved error bound {achieved:e} > requested {requested:e}")]
    QuadratureNotConverged { achieved: f64, requested: f64 },

    #[error("covariance factorization failed even with jitter {max_jitter:e}; the covariance model is not positive definite")]
    FactorizationFailed { max_jitter: f64 },

    #[error("non-finite state encountered at step {step}")]
    NonFinite { step: usize },

    #[error("theta family has no entry for ({k}:{l}); nmax={nmax}")]
    MissingTheta { k: usize, l: usize, nmax: usize },

    #[error("theta family invariant violated at ({k}:{l}): {detail}")]
    ThetaInvariant { k: usize, l: usize, detail: String },

    #[error("cell enumeration supports 1 <= N <= {max}, got {n}")]
    CellBudget { n: usize, max: usize },

    #[error("step budget of {budget} exhausted before reaching the horizon")]
    StepBudget { budget: usize },

    #[error("spectral sampling is not available for covariance kind {kind}")]
    UnsupportedSpectral { kind: String },

    #[error("CFL violation: diffusion number {diffusion_number:.3} exceeds the stability limit")]
    CflViolation { diffusion_number: f64 },

    #[error("degenerate exit histogram: {0}")]
    DegenerateHistogram(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
