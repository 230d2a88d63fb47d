//! Edge query selection for kidney exchange.
//!
//! An exchange graph is cleared by a fixed matching policy (max-weight or
//! failure-aware). Before clearing, a limited number of potential transplants
//! (edges) may be pre-screened; each screened edge is accepted or rejected,
//! and accepted edges are more likely to survive post-match. This crate
//! provides the model (graphs, cycle/chain structures, rejection and failure
//! distributions), an exact packing solver for both policies, the expected
//! final matching weight of a query set, the search algorithms that choose
//! which edges to query (exhaustive, greedy, UCT tree search, in single- and
//! multi-stage form) and the experiment harness built on top of them.

pub mod error;
pub mod experiments;
pub mod graph;
pub mod matching;
pub mod selection;
pub mod uncertainty;

pub use error::{Error, Result};
pub use graph::{
    enumerate_structures, generate_random_graph, validate_graph, CycleChain, Edge, ExchangeGraph,
    GraphData, StructureKind, Vertex, VertexKind, Violation,
};
pub use matching::{
    brute_force_packing, expected_structure_weight, post_match_expected_weight, realized_weight,
    solve_policy, Matching, PolicyKind,
};
pub use selection::{
    EvalConfig, Evaluator, LegalEdgeSets, MctsConfig, SearchBudget, SelectionOutcome,
};
pub use uncertainty::{
    DistributionSpec, EdgeProbabilities, EdgeSet, FailureVector, QuerySet, RejectionScenario,
    RejectionVector, ScenarioStream,
};
