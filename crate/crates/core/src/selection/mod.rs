//! Choosing which edges to query.
//!
//! [`Evaluator`] computes the single-stage objective `V^S(q)`: the expected
//! final matching weight when `q` is queried, the responses are observed and
//! the policy then clears the exchange. The search algorithms in this module
//! only interact with the problem through an evaluator, which also counts
//! clearing-solver invocations.

mod exhaustive;
mod greedy;
mod legal;
mod mcts;
mod multistage;
mod ucb;

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{enumerate_structures, CycleChain, ExchangeGraph, DEFAULT_MAX_CHAIN_LEN, DEFAULT_MAX_CYCLE_LEN};
use crate::matching::{
    conflict_components, pack, post_match_expected_weight, solve_policy, structure_values, Matching, PolicyKind,
};
use crate::uncertainty::{
    check_consistent, enumerate_patterns, sample_rejections, DistributionSpec, EdgeSet, Phase, QuerySet,
    RejectionVector, ScenarioStream, DEFAULT_EXACT_CAP,
};

pub use exhaustive::{exhaustive_opt, exhaustive_search, ExhaustiveResult, DEFAULT_NODE_CAP};
pub use greedy::{greedy_single_stage, GreedyResult};
pub use legal::{LegalConfig, LegalEdgeSets};
pub use mcts::{mcts_single_stage, MctsResult};
pub use multistage::{greedy_next_edge, mcts_next_edge, random_next_edge, NextEdge};
pub use ucb::{ucb_score, UcbStats};

/// Above this many relevant queried edges, exact evaluation is refused
/// even when explicitly requested.
pub const EXACT_HARD_LIMIT: usize = 24;

/// Component index and the bit patterns of its structure values.
type PackKey = (usize, Vec<u64>);

// Memo tables are cleared when they grow past this many entries.
const MEMO_LIMIT: usize = 1 << 20;

/// A graph, its enumerated structures and its edge distribution.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: ExchangeGraph,
    pub structures: Vec<CycleChain>,
    pub spec: DistributionSpec,
    relevant: EdgeSet,
    components: Vec<Component>,
}

/// Structures that conflict only among themselves.
#[derive(Debug, Clone)]
struct Component {
    indices: Vec<usize>,
    structures: Vec<CycleChain>,
}

impl Instance {
    /// Enumerates structures with the default length caps (3, 3).
    pub fn new(graph: ExchangeGraph, spec: DistributionSpec) -> Result<Self> {
        Self::with_caps(graph, spec, DEFAULT_MAX_CYCLE_LEN, DEFAULT_MAX_CHAIN_LEN)
    }

    pub fn with_caps(
        graph: ExchangeGraph,
        spec: DistributionSpec,
        max_cycle_len: usize,
        max_chain_len: usize,
    ) -> Result<Self> {
        spec.check_covers(&graph)?;
        let structures = enumerate_structures(&graph, max_cycle_len, max_chain_len);
        let relevant = EdgeSet::from_edges(
            graph.edge_count(),
            structures.iter().flat_map(|c| c.edges.iter().copied()),
        );
        let components = conflict_components(&structures)
            .into_iter()
            .map(|indices| Component { structures: indices.iter().map(|&i| structures[i].clone()).collect(), indices })
            .collect();
        Ok(Instance { graph, structures, spec, relevant, components })
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    /// Edges that belong to at least one structure. Querying any other edge
    /// cannot change a matching or its value.
    pub fn relevant_edges(&self) -> &EdgeSet {
        &self.relevant
    }

    pub fn empty_set(&self) -> EdgeSet {
        EdgeSet::empty(self.edge_count())
    }
}

/// How `V^S(q)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Query sets with fewer relevant edges than this are evaluated exactly.
    pub exact_cap: usize,
    /// Scenario count for the sampled estimator.
    pub samples: usize,
    /// Seed of the common-random-number scenario streams.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { exact_cap: DEFAULT_EXACT_CAP, samples: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Exact,
    Sampled,
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Estimate {
        let n = values.len() as f64;
        if values.is_empty() {
            return Estimate { mean: 0.0, std_err: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Estimate { mean, std_err: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { mean, std_err: (var / n).sqrt() }
    }
}

/// Evaluates `V^S(q)` and outcome values `W(M(r); q, r)` for one instance
/// and policy, with memoization and oracle-call accounting.
///
/// Two counters are kept. `oracle_calls` counts outcome evaluations: one
/// per rejection scenario each time a query set's objective is computed,
/// and one per direct [`outcome_value`](Self::outcome_value) request.
/// Asking again for the objective of a query set already evaluated is a
/// cache lookup and is not counted. `solver_calls` counts the packing
/// solves actually performed, after outcome-level caching.
///
/// Single-threaded by design; use one evaluator per thread.
pub struct Evaluator<'a> {
    instance: &'a Instance,
    policy: PolicyKind,
    config: EvalConfig,
    oracle_calls: Cell<u64>,
    solver_calls: Cell<u64>,
    objective_memo: RefCell<HashMap<EdgeSet, f64>>,
    outcome_memo: RefCell<HashMap<(EdgeSet, EdgeSet), f64>>,
    /// Packing of one component, keyed by the component's value bits.
    pack_memo: RefCell<HashMap<PackKey, Vec<usize>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(instance: &'a Instance, policy: PolicyKind, config: EvalConfig) -> Self {
        Evaluator {
            instance,
            policy,
            config,
            oracle_calls: Cell::new(0),
            solver_calls: Cell::new(0),
            objective_memo: RefCell::default(),
            outcome_memo: RefCell::default(),
            pack_memo: RefCell::default(),
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn oracle_calls(&self) -> u64 {
        self.oracle_calls.get()
    }

    pub fn solver_calls(&self) -> u64 {
        self.solver_calls.get()
    }

    pub fn reset_counters(&self) {
        self.oracle_calls.set(0);
        self.solver_calls.set(0);
    }

    fn relevant(&self, q: &EdgeSet) -> EdgeSet {
        q.intersection(&self.instance.relevant)
    }

    /// Exact when `q` has fewer relevant edges than the exact cap.
    pub fn mode(&self, q: &QuerySet) -> EvalMode {
        if self.relevant(q).count() < self.config.exact_cap {
            EvalMode::Exact
        } else {
            EvalMode::Sampled
        }
    }

    /// `V^S(q)`, exact or sampled according to [`mode`](Self::mode).
    /// Deterministic given the evaluation seed.
    pub fn objective(&self, q: &QuerySet) -> f64 {
        let key = self.relevant(q);
        let exact = key.count() < self.config.exact_cap;
        if let Some(&v) = self.objective_memo.borrow().get(&key) {
            return v;
        }
        let value = if exact { self.exact_relevant(&key) } else { self.sampled_mean(&key, self.config.samples) };
        let mut memo = self.objective_memo.borrow_mut();
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.insert(key, value);
        value
    }

    /// [`objective`](Self::objective) after checking that `q` is legal.
    pub fn objective_checked(&self, q: &QuerySet, legal: &LegalEdgeSets) -> Result<f64> {
        legal.check(q)?;
        Ok(self.objective(q))
    }

    /// Exact `V^S(q)` regardless of the configured cap.
    pub fn exact_objective(&self, q: &QuerySet) -> Result<f64> {
        let key = self.relevant(q);
        if key.count() > EXACT_HARD_LIMIT {
            return Err(Error::ExactCapExceeded { size: key.count(), cap: EXACT_HARD_LIMIT });
        }
        Ok(self.exact_relevant(&key))
    }

    fn exact_relevant(&self, key: &EdgeSet) -> f64 {
        let edges = key.to_vec();
        enumerate_patterns(&self.instance.spec, &edges, key.universe())
            .iter()
            .map(|s| s.probability * self.outcome_value_unchecked(key, &s.rejections))
            .sum()
    }

    /// Sampled estimate over `samples` common-random-number scenarios.
    pub fn sampled_objective(&self, q: &QuerySet, samples: usize) -> Estimate {
        Estimate::from_values(&self.scenario_values(q, samples))
    }

    fn sampled_mean(&self, key: &EdgeSet, samples: usize) -> f64 {
        if samples == 0 {
            return 0.0;
        }
        self.scenario_values(key, samples).iter().sum::<f64>() / samples as f64
    }

    /// Outcome values of the first `samples` rejection scenarios for `q`.
    /// Scenario `s` is drawn from the same stream for every query set.
    pub fn scenario_values(&self, q: &QuerySet, samples: usize) -> Vec<f64> {
        let key = self.relevant(q);
        (0..samples as u64)
            .map(|s| {
                let stream = ScenarioStream::new(self.config.seed, Phase::Rejection, s);
                let r = sample_rejections(&self.instance.spec, &key, &stream);
                self.outcome_value_unchecked(&key, &r)
            })
            .collect()
    }

    /// `W(M(r); q, r)`: expected weight of the policy's matching after
    /// observing `(q, r)`. Counts as one oracle call.
    pub fn outcome_value(&self, q: &QuerySet, r: &RejectionVector) -> Result<f64> {
        check_consistent(q, r)?;
        let key = self.relevant(q);
        Ok(self.outcome_value_unchecked(&key, &r.intersection(&key)))
    }

    fn outcome_value_unchecked(&self, q: &EdgeSet, r: &EdgeSet) -> f64 {
        self.oracle_calls.set(self.oracle_calls.get() + 1);
        let key = (q.clone(), r.clone());
        if let Some(&v) = self.outcome_memo.borrow().get(&key) {
            return v;
        }
        let inst = self.instance;
        let m = self.solve(q, r);
        let value = post_match_expected_weight(&inst.graph, &inst.structures, &m, &inst.spec, q, r);
        let mut memo = self.outcome_memo.borrow_mut();
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.insert(key, value);
        value
    }

    /// Same matching as [`solve_policy`], solved component by component;
    /// a component whose values were seen before is not re-packed.
    fn solve(&self, q: &EdgeSet, r: &EdgeSet) -> Matching {
        self.solver_calls.set(self.solver_calls.get() + 1);
        let inst = self.instance;
        let values = structure_values(self.policy, &inst.graph, &inst.structures, &inst.spec, q, r);
        let mut selected = Vec::new();
        for (k, comp) in inst.components.iter().enumerate() {
            let local: Vec<f64> = comp.indices.iter().map(|&i| values[i]).collect();
            if local.iter().all(|&v| v <= 0.0) {
                continue;
            }
            let key: PackKey = (k, local.iter().map(|v| v.to_bits()).collect());
            if let Some(picked) = self.pack_memo.borrow().get(&key) {
                selected.extend(picked.iter().map(|&j| comp.indices[j]));
                continue;
            }
            let picked = pack(&comp.structures, &local);
            selected.extend(picked.iter().map(|&j| comp.indices[j]));
            let mut memo = self.pack_memo.borrow_mut();
            if memo.len() >= MEMO_LIMIT {
                memo.clear();
            }
            memo.insert(key, picked);
        }
        selected.sort_unstable();
        Matching::from_selection(&inst.structures, &values, selected)
    }

    /// The policy's matching at `(q, r)`.
    pub fn matching(&self, q: &QuerySet, r: &RejectionVector) -> Result<Matching> {
        check_consistent(q, r)?;
        let inst = self.instance;
        Ok(solve_policy(self.policy, &inst.graph, &inst.structures, &inst.spec, q, r))
    }

    pub(crate) fn evaluation_info(&self, q: &QuerySet) -> EvaluationInfo {
        let mode = self.mode(q);
        EvaluationInfo {
            mode,
            samples: match mode {
                EvalMode::Exact => None,
                EvalMode::Sampled => Some(self.config.samples),
            },
            seed: self.config.seed,
        }
    }
}

/// Time or iteration limit for a search phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchBudget {
    Iterations(u64),
    WallClock(Duration),
}

/// Parameters of the tree searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MctsConfig {
    /// Number of levels below the current root that keep statistics (`L`).
    pub lookahead: usize,
    /// Budget per level (single-stage) or per recommendation (multi-stage).
    pub budget: SearchBudget,
    pub seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig { lookahead: 1, budget: SearchBudget::Iterations(1000), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationInfo {
    pub mode: EvalMode,
    /// Scenario count when sampled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub seed: u64,
}

/// Result of a single-stage selection method, in its JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub method: String,
    pub queried_edges: Vec<usize>,
    pub objective_value: f64,
    pub evaluation: EvaluationInfo,
    /// Best value found at each level of the search.
    pub trace: Vec<f64>,
}

impl SelectionOutcome {
    pub fn new(method: &str, eval: &Evaluator<'_>, q: &QuerySet, value: f64, trace: Vec<f64>) -> Self {
        SelectionOutcome {
            method: method.to_string(),
            queried_edges: q.to_vec(),
            objective_value: value,
            evaluation: eval.evaluation_info(q),
            trace,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{self, COUNTEREXAMPLE_E1, COUNTEREXAMPLE_E2, COUNTEREXAMPLE_E3};
    use crate::uncertainty::make_simple;

    fn counterexample_instance() -> Instance {
        let g = fixtures::counterexample();
        let spec = make_simple(&g);
        Instance::new(g, spec).unwrap()
    }

    fn set(edges: &[usize]) -> EdgeSet {
        EdgeSet::from_edges(8, edges.iter().copied())
    }

    #[test]
    fn baseline_and_single_query() {
        let inst = counterexample_instance();
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
        assert!((eval.objective(&set(&[])) - 7.0 / 8.0).abs() < 1e-12);
        assert_eq!(eval.oracle_calls(), 1);
        assert_eq!(eval.solver_calls(), 1);
        assert!((eval.objective(&set(&[COUNTEREXAMPLE_E3])) - 27.0 / 32.0).abs() < 1e-12);
        assert_eq!(eval.oracle_calls(), 3);
    }

    #[test]
    fn pair_and_triple_queries() {
        let inst = counterexample_instance();
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
        let (e1, e2, e3) = (COUNTEREXAMPLE_E1, COUNTEREXAMPLE_E2, COUNTEREXAMPLE_E3);
        assert!((eval.objective(&set(&[e2, e3])) - 31.0 / 32.0).abs() < 1e-12);
        assert!((eval.objective(&set(&[e1, e3])) - 49.0 / 64.0).abs() < 1e-12);
        assert!((eval.objective(&set(&[e1, e2, e3])) - 63.0 / 64.0).abs() < 1e-12);
        assert!((eval.objective(&set(&[e1, e2])) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_objective_is_cached() {
        let inst = counterexample_instance();
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
        let q = set(&[0, 1]);
        let a = eval.objective(&q);
        assert_eq!((eval.oracle_calls(), eval.solver_calls()), (4, 4));
        assert_eq!(eval.objective(&q), a);
        assert_eq!((eval.oracle_calls(), eval.solver_calls()), (4, 4));
        // a different query set is evaluated afresh
        eval.objective(&set(&[0]));
        assert_eq!(eval.oracle_calls(), 6);
    }

    #[test]
    fn sampled_mode_above_cap() {
        let inst = counterexample_instance();
        let cfg = EvalConfig { exact_cap: 2, samples: 4000, seed: 3 };
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, cfg);
        let q = set(&[0, 1, 2]);
        assert_eq!(eval.mode(&q), EvalMode::Sampled);
        let sampled = eval.objective(&q);
        let est = eval.sampled_objective(&q, 4000);
        assert_eq!(sampled, est.mean);
        assert!((sampled - 63.0 / 64.0).abs() < 4.0 * est.std_err + 1e-12);
        assert_eq!(eval.mode(&set(&[0])), EvalMode::Exact);
    }

    #[test]
    fn illegal_query_rejected() {
        let inst = counterexample_instance();
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
        let legal = LegalEdgeSets::with_budget(&inst.graph, 1);
        assert!(eval.objective_checked(&set(&[0, 1]), &legal).is_err());
        assert!(eval.objective_checked(&set(&[0]), &legal).is_ok());
    }

    #[test]
    fn outcome_value_checks_consistency() {
        let inst = counterexample_instance();
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
        assert!(eval.outcome_value(&set(&[]), &set(&[2])).is_err());
        let rejected = eval.outcome_value(&set(&[2]), &set(&[2])).unwrap();
        assert!((rejected - 3.5 / 8.0).abs() < 1e-12);
        let accepted = eval.outcome_value(&set(&[2]), &set(&[])).unwrap();
        assert!((accepted - 5.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn component_solve_matches_full_packing() {
        use crate::graph::generate_random_graph;
        use rand::{Rng, SeedableRng};
        for seed in 0..40u64 {
            let g = generate_random_graph(30, 0.06, seed);
            let spec = make_simple(&g);
            let inst = Instance::new(g, spec).unwrap();
            let m = inst.edge_count();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for policy in [PolicyKind::MaxWeight, PolicyKind::FailureAware] {
                let eval = Evaluator::new(&inst, policy, EvalConfig::default());
                for _ in 0..20 {
                    let q = EdgeSet::from_edges(m, (0..m).filter(|_| rng.random_bool(0.3)));
                    let r = EdgeSet::from_edges(m, q.to_vec().into_iter().filter(|_| rng.random_bool(0.5)));
                    let full = solve_policy(policy, &inst.graph, &inst.structures, &inst.spec, &q, &r);
                    assert_eq!(eval.solve(&q, &r), full, "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn selection_outcome_json() {
        let inst = counterexample_instance();
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
        let q = set(&[2]);
        let out = SelectionOutcome::new("greedy", &eval, &q, eval.objective(&q), vec![0.875, 0.84375]);
        let json: serde_json::Value = serde_json::to_value(&out).unwrap();
        assert_eq!(json["method"], "greedy");
        assert_eq!(json["queried_edges"], serde_json::json!([2]));
        assert_eq!(json["evaluation"]["mode"], "exact");
        assert_eq!(json["evaluation"]["seed"], 0);
    }
}
