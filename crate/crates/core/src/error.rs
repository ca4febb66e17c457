use thiserror::Error;

use crate::flow::FlowTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular metric at node {node}: det = {det:e}")]
    SingularMetric { node: usize, det: f64 },

    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),

    /// The graph of a sphere failed its own plane equation, which means the
    /// arctan branch was picked wrongly.
    #[error("arctan branch check failed: plane residual {0:e}")]
    Branch(f64),

    /// The flow left the set of admissible graph functions. The trace holds
    /// every row accepted before that happened.
    #[error("graph left its domain at t = {t}: {reason}")]
    DegenerateGraph {
        t: f64,
        reason: String,
        trace: Box<FlowTrace>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
