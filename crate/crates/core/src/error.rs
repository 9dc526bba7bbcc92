use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate metric at node {node}: g11 = {g11:e} at t = {t}")]
    GeometryDegenerate { node: usize, g11: f64, t: f64 },
    #[error("curve is not periodic: endpoint gap {gap:e}")]
    NotPeriodic { gap: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("input is not zero-mean on the reference curve (mean {mean:e})")]
    NotZeroMean { mean: f64 },
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("time index {index} out of range (path has {len} nodes)")]
    NodeOutOfRange { index: usize, len: usize },
    #[error("seed basis is rank deficient at vector {index} (pivot {pivot:e})")]
    RankDeficient { index: usize, pivot: f64 },
    #[error("singular matrix in {context}")]
    Singular { context: &'static str },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("path left the admissible region at step {step} (|x| = {norm:e})")]
    BlowUp { step: usize, norm: f64 },
    #[error("domain map is not a diffeomorphism: {0}")]
    NotDiffeomorphic(String),
    #[error("time step {dt:e} violates the advection limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
