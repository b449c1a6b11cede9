use thiserror::Error;

/// Errors raised anywhere in the geometry, identity, Hodge and flow pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("integration density must be positive (node {node} has {value})")]
    NonPositiveDensity { node: usize, value: f64 },

    #[error("degenerate immersion at node {node}: det g = {det:e}")]
    DegenerateImmersion { node: usize, det: f64 },

    #[error("N is not an isomorphism at node {node}: min eigenvalue of eta = {min_eig:e}")]
    NIsomorphismFailure { node: usize, min_eig: f64 },

    #[error("state is not Lagrangian: max |omega| = {omega_max:e} exceeds {tol:e}")]
    NotLagrangian { omega_max: f64, tol: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("flow approaching a singularity at t = {t}: min eigenvalue of g = {min_eig:e}")]
    SingularityStop { t: f64, min_eig: f64 },

    #[error("Lagrangian condition lost at t = {t}: max |omega| = {omega_max:e}")]
    LagrangianViolation { t: f64, omega_max: f64 },

    #[error("need at least {needed} consecutive snapshots, got {got}")]
    InsufficientSnapshots { needed: usize, got: usize },

    #[error("snapshots around index {index} are not uniformly spaced in time")]
    NonUniformSnapshots { index: usize },

    #[error("variance signature of length {signature} does not match tensor rank {rank}")]
    SignatureMismatch { signature: usize, rank: usize },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown scalar function `{0}`")]
    UnknownFunction(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
