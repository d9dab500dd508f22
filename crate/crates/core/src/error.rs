use thiserror::Error;

/// Errors raised by the model, solvers and engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("phase error: {0}")]
    Phase(String),
    #[error("invalid device: {0}")]
    Device(String),
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("power-flow sweep did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("cost curvature unavailable for device at coordinate {0}")]
    CurvatureUnavailable(usize),
    #[error("cannot form {k} disjoint subtrees (at most {max} available)")]
    InfeasibleK { k: usize, max: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("barrier violation: RC {rc} missing dual from member node {node}")]
    MissingMember { rc: usize, node: usize },
    #[error("barrier violation: CC missing aggregate from RC {0}")]
    MissingAggregate(usize),
    #[error("barrier violation: {actor} missing coupling message")]
    MissingCoupling { actor: String },
    #[error("barrier timeout at iteration {iter}, step {step}: slowest link {latency_us}us exceeds {timeout_us}us")]
    BarrierTimeout {
        iter: usize,
        step: u8,
        latency_us: u64,
        timeout_us: u64,
    },
    #[error("impedance table access outside scope: node {0}")]
    OutOfScope(usize),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
