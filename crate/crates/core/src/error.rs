use thiserror::Error;

use crate::graph::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exchange graph: {}", format_violations(.0))]
    InvalidGraph(Vec<Violation>),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("unknown edge id {0}")]
    UnknownEdge(usize),

    #[error("query set has {size} edges, exact evaluation is capped at {cap}; use the sampling path")]
    ExactCapExceeded { size: usize, cap: usize },

    #[error("rejection vector is inconsistent with the query set at edge {0}")]
    InconsistentResponses(usize),

    #[error("query set is not legal: {0}")]
    IllegalQuerySet(String),

    #[error("{count} structures exceed the brute-force cap of {cap}")]
    TooManyStructures { count: usize, cap: usize },

    #[error("exhaustive search visited {visited} nodes (cap {cap}); best so far {best_value} at {best_edges:?}")]
    NodeCapExceeded {
        visited: usize,
        cap: usize,
        best_edges: Vec<usize>,
        best_value: f64,
    },

    #[error("optimal value {0} is not positive")]
    NonPositiveOptimum(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
