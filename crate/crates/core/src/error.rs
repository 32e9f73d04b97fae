use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("routing loop in stage (app {app}, k {k})")]
    LoopDetected { app: usize, k: usize },

    #[error("no feasible finite-cost initialization: {0}")]
    NoFeasibleInit(String),

    #[error("saturated: {0}")]
    Saturated(String),

    #[error("destination of app {app} unreachable from node {node}")]
    DestinationUnreachable { app: usize, node: usize },

    #[error("source node {node} of app {app} cannot compute task {k}")]
    SourceLacksCompute { app: usize, node: usize, k: usize },

    #[error("node {node} has no usable direction for stage (app {app}, k {k})")]
    NoUnblockedDirection { node: usize, app: usize, k: usize },

    #[error("broadcast deadlock in stage (app {app}, k {k}); waiting nodes {waiting:?}")]
    Deadlock {
        app: usize,
        k: usize,
        waiting: Vec<usize>,
    },

    #[error("cost did not decrease at iteration {iter} even at the minimum stepsize")]
    Divergence { iter: usize },

    #[error("unknown entity: {0}")]
    UnknownEntity(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
