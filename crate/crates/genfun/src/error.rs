use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point outside the domain Gamma: {0}")]
    OutOfGamma(String),
    #[error("g_z = {0} is not negative; the generating function is mis-normalised")]
    DegenerateGz(f64),
    #[error("Newton iteration did not converge (best residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("singular Jacobian at the current iterate")]
    SingularJacobian,
    #[error("value {u} outside the attainable range [{lo}, {hi}]")]
    OutOfRange { u: f64, lo: f64, hi: f64 },
    #[error("stencil or segment point left the jet domain: {0}")]
    NotInU(String),
    #[error("gradient of the height function vanishes at the base point")]
    DegenerateGradient,
    #[error("function is not g-convex (envelope defect {0:e})")]
    NotGConvex(f64),
    #[error("no local g-support found at node {0}")]
    NotLocallyGConvex(usize),
    #[error("hypothesis could not be verified: {0}")]
    HypothesisUnverifiable(String),
    #[error("no admissible source node for target node {0}")]
    AllClipped(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
