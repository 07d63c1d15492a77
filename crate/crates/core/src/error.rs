use thiserror::Error;

use crate::collocation::{NodeFamily, QDeltaKind, Role};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{family:?} nodes are not defined for M = {nodes}")]
    UnsupportedNodeCount { family: NodeFamily, nodes: usize },

    #[error("collocation nodes are degenerate: {0}")]
    DegenerateNodes(String),

    #[error("{kind:?} cannot be used in the {role:?} role")]
    RoleMismatch { kind: QDeltaKind, role: Role },

    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("singular system: pivot {pivot:.3e} below threshold")]
    SingularSystem { pivot: f64 },

    #[error("copying the last node requires tau_M = 1, got {last_node}")]
    InvalidFinalUpdate { last_node: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in state after {0}")]
    NonFinite(&'static str),

    #[error("degenerate convergence fit: {0}")]
    DegenerateFit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
