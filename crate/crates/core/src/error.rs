use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("Poincare disk chart requires the closed domain inside the unit disk (farthest corner at |p| = {max_radius})")]
    DomainOutsideChart { max_radius: f64 },

    #[error("custom conformal metric needs a phi expression")]
    MissingConformalFactor,

    #[error("conformal factor is not finite at node ({i}, {j})")]
    NonFiniteConformalFactor { i: usize, j: usize },

    #[error("region is empty")]
    EmptyRegion,

    #[error("offset region K(rho) is empty for rho = {rho}")]
    EmptyOffsetRegion { rho: f64 },

    #[error("no nodes in the equidistant band")]
    NoBandNodes,

    #[error("harmonic interpolant needs both boundary classes (has zero side: {has_zero}, has one side: {has_one})")]
    MissingBoundaryClass { has_zero: bool, has_one: bool },

    #[error("{nodes} mask nodes belong to components without Dirichlet data")]
    UnanchoredComponent { nodes: usize },

    #[error("conjugate gradient did not reach residual {target:e} after {iterations} iterations (residual {residual:e})")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("no regular value: best band-minimum gradient {best:e} is below threshold {threshold:e}")]
    NoRegularValue { best: f64, threshold: f64 },

    #[error("midsurface containment violated at {} nodes", nodes.len())]
    ContainmentViolated { nodes: Vec<usize> },

    #[error("time step {dt:e} exceeds the parabolic stability bound {bound:e}")]
    CflViolated { dt: f64, bound: f64 },

    #[error("interface came within {layers} nodes of the box boundary at t = {time}")]
    InterfaceNearBoundary { time: f64, layers: usize },

    #[error("offset rate {lambda} must be strictly below the Ricci lower bound {bound}")]
    LambdaNotBelowRicciBound { lambda: f64, bound: f64 },

    #[error("trajectories are recorded on different time grids")]
    TimeGridMismatch,

    #[error("initial distance is zero")]
    ZeroInitialDistance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported oracle kind `{0}`")]
    UnsupportedKind(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(key: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
