//! Realized and expected weights of cycles, chains and matchings, and exact
//! clearing under the max-weight and failure-aware policies.

mod packing;

use serde::{Deserialize, Serialize};

use crate::graph::{CycleChain, ExchangeGraph, StructureKind};
use crate::uncertainty::{DistributionSpec, EdgeSet, QuerySet, RejectionVector};

pub use packing::{brute_force_packing, conflict_components, pack, BRUTE_FORCE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Maximize nominal weight over non-rejected edges; post-match failures
    /// are not anticipated.
    MaxWeight,
    /// Maximize expected post-match weight.
    FailureAware,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::MaxWeight => "max_weight",
            PolicyKind::FailureAware => "failure_aware",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max_weight" | "max-weight" | "max" => Ok(PolicyKind::MaxWeight),
            "failure_aware" | "failure-aware" | "fa" => Ok(PolicyKind::FailureAware),
            _ => Err(format!("unknown policy {s:?} (expected max_weight or failure_aware)")),
        }
    }
}

/// Final weight of a structure once the edges in `dead` (rejected or
/// failed) are removed.
///
/// A cycle is worth its nominal weight if no edge is dead and nothing
/// otherwise. A chain executes up to its first dead edge and is worth the
/// edges before it.
pub fn realized_weight(graph: &ExchangeGraph, c: &CycleChain, dead: &EdgeSet) -> f64 {
    match c.kind {
        StructureKind::Cycle => {
            if c.edges.iter().any(|&e| dead.contains(e)) {
                0.0
            } else {
                c.nominal_weight
            }
        }
        StructureKind::Chain => c
            .edges
            .iter()
            .take_while(|&&e| !dead.contains(e))
            .map(|&e| graph.edge(e).weight)
            .sum(),
    }
}

/// `E[F(c, r + f) | q, r]` under independent edges.
///
/// With `s_e` the survival probability of edge `e`, a cycle is worth
/// `w(c) * prod s_e` and a chain `e_1..e_L` is worth
/// `sum_k w(e_k) * prod_{j<=k} s_{e_j}`: edge `k` contributes exactly when
/// it and every edge before it survive.
pub fn expected_structure_weight(
    graph: &ExchangeGraph,
    c: &CycleChain,
    spec: &DistributionSpec,
    q: &QuerySet,
    r: &RejectionVector,
) -> f64 {
    match c.kind {
        StructureKind::Cycle => {
            let survive: f64 = c.edges.iter().map(|&e| spec.success_probability(e, q, r)).product();
            c.nominal_weight * survive
        }
        StructureKind::Chain => {
            let mut reach = 1.0;
            let mut total = 0.0;
            for &e in &c.edges {
                reach *= spec.success_probability(e, q, r);
                if reach == 0.0 {
                    break;
                }
                total += graph.edge(e).weight * reach;
            }
            total
        }
    }
}

/// Per-structure values the policy maximizes at `(q, r)`.
pub fn structure_values(
    policy: PolicyKind,
    graph: &ExchangeGraph,
    structures: &[CycleChain],
    spec: &DistributionSpec,
    q: &QuerySet,
    r: &RejectionVector,
) -> Vec<f64> {
    structures
        .iter()
        .map(|c| match policy {
            PolicyKind::MaxWeight => realized_weight(graph, c, r),
            PolicyKind::FailureAware => expected_structure_weight(graph, c, spec, q, r),
        })
        .collect()
}

/// A vertex-disjoint selection of structures, by index into the structure
/// list it was solved over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Selected structure indices, ascending.
    pub selected: Vec<usize>,
    pub nominal_weight: f64,
    /// Objective the packing maximized (sum of per-structure values).
    pub value: f64,
}

impl Matching {
    pub fn empty() -> Self {
        Matching { selected: Vec::new(), nominal_weight: 0.0, value: 0.0 }
    }

    pub(crate) fn from_selection(structures: &[CycleChain], values: &[f64], selected: Vec<usize>) -> Self {
        let nominal_weight = selected.iter().map(|&i| structures[i].nominal_weight).sum();
        let value = selected.iter().map(|&i| values[i]).sum();
        Matching { selected, nominal_weight, value }
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn structures<'a>(&'a self, structures: &'a [CycleChain]) -> impl Iterator<Item = &'a CycleChain> + 'a {
        self.selected.iter().map(move |&i| &structures[i])
    }

    pub fn is_vertex_disjoint(&self, structures: &[CycleChain]) -> bool {
        self.selected.iter().enumerate().all(|(k, &i)| {
            self.selected[k + 1..].iter().all(|&j| !structures[i].conflicts_with(&structures[j]))
        })
    }

    /// Serializable description with per-structure expected weights.
    pub fn report(
        &self,
        graph: &ExchangeGraph,
        structures: &[CycleChain],
        spec: &DistributionSpec,
        q: &QuerySet,
        r: &RejectionVector,
    ) -> MatchingReport {
        let entries: Vec<StructureReport> = self
            .structures(structures)
            .map(|c| StructureReport {
                kind: c.kind,
                edges: c.edges.clone(),
                vertices: c.vertices.clone(),
                nominal_weight: c.nominal_weight,
                expected_weight: expected_structure_weight(graph, c, spec, q, r),
            })
            .collect();
        MatchingReport {
            expected_weight: entries.iter().map(|s| s.expected_weight).sum(),
            nominal_weight: self.nominal_weight,
            structures: entries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub kind: StructureKind,
    pub edges: Vec<usize>,
    pub vertices: Vec<usize>,
    pub nominal_weight: f64,
    pub expected_weight: f64,
}

/// JSON form of a matching: the selected structures plus totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingReport {
    pub structures: Vec<StructureReport>,
    pub nominal_weight: f64,
    pub expected_weight: f64,
}

/// `W(x; q, r)`: expected post-match weight of a matching. Selected
/// structures are vertex-disjoint, so this is the sum of their expected
/// weights.
pub fn post_match_expected_weight(
    graph: &ExchangeGraph,
    structures: &[CycleChain],
    x: &Matching,
    spec: &DistributionSpec,
    q: &QuerySet,
    r: &RejectionVector,
) -> f64 {
    x.structures(structures).map(|c| expected_structure_weight(graph, c, spec, q, r)).sum()
}

/// Clears the exchange under `policy` after observing `(q, r)`.
///
/// The optimum is exact. Structures with zero value are never selected;
/// among optimal selections the one whose sorted index list is smallest
/// (treating a missing element as larger than any index) is returned.
pub fn solve_policy(
    policy: PolicyKind,
    graph: &ExchangeGraph,
    structures: &[CycleChain],
    spec: &DistributionSpec,
    q: &QuerySet,
    r: &RejectionVector,
) -> Matching {
    let values = structure_values(policy, graph, structures, spec, q, r);
    let selected = pack(structures, &values);
    Matching::from_selection(structures, &values, selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{enumerate_structures, fixtures, ExchangeGraph, VertexKind};
    use crate::uncertainty::{make_simple, EdgeProbabilities};
    use proptest::prelude::*;

    fn fig() -> (ExchangeGraph, Vec<CycleChain>, DistributionSpec) {
        let g = fixtures::counterexample();
        let s = enumerate_structures(&g, 3, 3);
        let spec = make_simple(&g);
        (g, s, spec)
    }

    fn line_chain(weights: &[f64]) -> (ExchangeGraph, CycleChain) {
        let mut kinds = vec![VertexKind::Pair; weights.len() + 1];
        kinds[0] = VertexKind::Ndd;
        let arcs: Vec<_> = weights.iter().enumerate().map(|(i, &w)| (i, i + 1, w)).collect();
        let g = ExchangeGraph::from_parts(&kinds, &arcs).unwrap();
        let c = CycleChain::new(&g, StructureKind::Chain, (0..weights.len()).collect());
        (g, c)
    }

    #[test]
    fn realized_weight_examples() {
        let (g, s, _) = fig();
        let none = EdgeSet::empty(8);
        assert_eq!(realized_weight(&g, &s[0], &none), 2.0);
        for e in [2, 6, 7] {
            assert_eq!(realized_weight(&g, &s[2], &EdgeSet::from_edges(8, [e])), 0.0);
        }
        let (g, c) = line_chain(&[1.0, 1.0, 1.0]);
        assert_eq!(realized_weight(&g, &c, &EdgeSet::from_edges(3, [1])), 1.0);
        assert_eq!(realized_weight(&g, &c, &EdgeSet::empty(3)), 3.0);
        assert_eq!(realized_weight(&g, &c, &EdgeSet::from_edges(3, [0])), 0.0);
    }

    #[test]
    fn expected_weight_examples() {
        let (g, s, spec) = fig();
        let q = EdgeSet::empty(8);
        assert!((expected_structure_weight(&g, &s[0], &spec, &q, &q) - 0.5).abs() < 1e-15);
        assert!((expected_structure_weight(&g, &s[2], &spec, &q, &q) - 3.0 / 8.0).abs() < 1e-15);
        assert!((expected_structure_weight(&g, &s[1], &spec, &q, &q) - 3.5 / 8.0).abs() < 1e-15);

        let (g, c) = line_chain(&[1.0, 1.0, 1.0]);
        let spec = make_simple(&g);
        let q = EdgeSet::empty(3);
        assert!((expected_structure_weight(&g, &c, &spec, &q, &q) - 7.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn matching_weights() {
        let (g, s, spec) = fig();
        let q = EdgeSet::empty(8);
        let pair = Matching::from_selection(&s, &[0.0; 3], vec![0, 2]);
        assert!((post_match_expected_weight(&g, &s, &pair, &spec, &q, &q) - 7.0 / 8.0).abs() < 1e-15);
        assert_eq!(post_match_expected_weight(&g, &s, &Matching::empty(), &spec, &q, &q), 0.0);
        let bce = Matching::from_selection(&s, &[0.0; 3], vec![1]);
        assert!((post_match_expected_weight(&g, &s, &bce, &spec, &q, &q) - 3.5 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn max_weight_policy_on_counterexample() {
        let (g, s, spec) = fig();
        let none = EdgeSet::empty(8);
        let m = solve_policy(PolicyKind::MaxWeight, &g, &s, &spec, &none, &none);
        assert_eq!(m.selected, vec![0, 2]);
        assert_eq!(m.nominal_weight, 5.0);

        let q = EdgeSet::from_edges(8, [fixtures::COUNTEREXAMPLE_E3]);
        let m = solve_policy(PolicyKind::MaxWeight, &g, &s, &spec, &q, &q);
        assert_eq!(m.selected, vec![1]);
        assert_eq!(m.nominal_weight, 3.5);
    }

    #[test]
    fn failure_aware_policy_on_counterexample() {
        let (g, s, spec) = fig();
        let none = EdgeSet::empty(8);
        let m = solve_policy(PolicyKind::FailureAware, &g, &s, &spec, &none, &none);
        assert_eq!(m.selected, vec![0, 2]);
        assert!((m.value - 7.0 / 8.0).abs() < 1e-15);
        // every feasible selection, by hand: {}, {AB}, {BCE}, {CDF}, {AB, CDF}
        let best = [0.0, 0.5, 3.5 / 8.0, 3.0 / 8.0, 7.0 / 8.0].into_iter().fold(0.0, f64::max);
        assert_eq!(m.value, best);
    }

    #[test]
    fn matching_report() {
        let (g, s, spec) = fig();
        let none = EdgeSet::empty(8);
        let m = solve_policy(PolicyKind::MaxWeight, &g, &s, &spec, &none, &none);
        let report = m.report(&g, &s, &spec, &none, &none);
        assert_eq!(report.structures.len(), 2);
        assert!((report.expected_weight - 7.0 / 8.0).abs() < 1e-15);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["structures"][0]["kind"], "cycle");
        assert_eq!(json["nominal_weight"], 5.0);
    }

    #[test]
    fn policy_parse() {
        assert_eq!("max_weight".parse::<PolicyKind>().unwrap(), PolicyKind::MaxWeight);
        assert_eq!("failure-aware".parse::<PolicyKind>().unwrap(), PolicyKind::FailureAware);
        assert!("x".parse::<PolicyKind>().is_err());
    }

    /// Exhaustive expectation of the realized weight over every failure
    /// pattern of the structure's edges; independent of the closed forms.
    fn brute_expected(
        g: &ExchangeGraph,
        c: &CycleChain,
        spec: &DistributionSpec,
        q: &EdgeSet,
        r: &EdgeSet,
    ) -> f64 {
        let mut total = 0.0;
        for pattern in 0u32..(1 << c.len()) {
            let mut dead = r.clone();
            let mut prob = 1.0;
            for (i, &e) in c.edges.iter().enumerate() {
                let p = spec.get(e);
                let fail = if r.contains(e) {
                    0.0
                } else if q.contains(e) {
                    1.0 - p.p_success_queried
                } else {
                    1.0 - p.p_success_unqueried
                };
                if pattern >> i & 1 == 1 {
                    prob *= fail;
                    dead.insert(e);
                } else {
                    prob *= 1.0 - fail;
                }
            }
            total += prob * realized_weight(g, c, &dead);
        }
        total
    }

    #[test]
    fn chain_closed_form_matches_brute_force() {
        let (g, c) = line_chain(&[1.0, 1.0, 1.0]);
        let spec = make_simple(&g);
        let q = EdgeSet::empty(3);
        assert!((brute_expected(&g, &c, &spec, &q, &q) - 7.0 / 8.0).abs() < 1e-15);
    }

    fn arb_probs() -> impl Strategy<Value = EdgeProbabilities> {
        (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b, c)| EdgeProbabilities {
            p_reject: a,
            p_success_queried: b,
            p_success_unqueried: c,
        })
    }

    proptest! {
        #[test]
        fn closed_form_matches_enumeration(
            weights in proptest::collection::vec(0.0f64..5.0, 1..=10),
            probs in proptest::collection::vec(arb_probs(), 10),
            is_cycle in any::<bool>(),
            qmask in any::<u16>(),
            rmask in any::<u16>(),
        ) {
            let n = weights.len();
            let (g, c) = if is_cycle && n >= 2 {
                let arcs: Vec<_> = weights.iter().enumerate().map(|(i, &w)| (i, (i + 1) % n, w)).collect();
                let g = ExchangeGraph::from_parts(&vec![VertexKind::Pair; n], &arcs).unwrap();
                let c = CycleChain::new(&g, StructureKind::Cycle, (0..n).collect());
                (g, c)
            } else {
                line_chain(&weights)
            };
            let spec = DistributionSpec::uniform(n, EdgeProbabilities::SIMPLE).unwrap();
            let spec = DistributionSpec::new(probs[..n].to_vec(), spec.provenance().clone()).unwrap();
            let q = EdgeSet::from_edges(n, (0..n).filter(|i| qmask >> i & 1 == 1));
            let r = EdgeSet::from_edges(n, q.iter().filter(|i| rmask >> i & 1 == 1));
            let closed = expected_structure_weight(&g, &c, &spec, &q, &r);
            let brute = brute_expected(&g, &c, &spec, &q, &r);
            prop_assert!((closed - brute).abs() <= 1e-12, "{} vs {}", closed, brute);
        }

        #[test]
        fn realized_weight_monotone(weights in proptest::collection::vec(0.0f64..5.0, 1..=8), dead in any::<u8>(), extra in 0usize..8) {
            let n = weights.len();
            let (g, c) = line_chain(&weights);
            let d = EdgeSet::from_edges(n, (0..n).filter(|i| dead >> i & 1 == 1));
            let more = d.with(extra % n);
            prop_assert!(realized_weight(&g, &c, &more) <= realized_weight(&g, &c, &d));
        }

        #[test]
        fn querying_an_edge_never_hurts_a_structure(
            weights in proptest::collection::vec(0.0f64..5.0, 2..=8),
            raw in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 8),
            is_cycle in any::<bool>(),
            qmask in any::<u8>(),
            pick in 0usize..8,
        ) {
            // probabilities satisfying (1 - P_R) P_Q >= P_N
            let n = weights.len();
            let probs: Vec<_> = raw[..n].iter().map(|&(a, b, c)| EdgeProbabilities {
                p_reject: a, p_success_queried: b, p_success_unqueried: c * (1.0 - a) * b,
            }).collect();
            let (g, c) = if is_cycle {
                let arcs: Vec<_> = weights.iter().enumerate().map(|(i, &w)| (i, (i + 1) % n, w)).collect();
                let g = ExchangeGraph::from_parts(&vec![VertexKind::Pair; n], &arcs).unwrap();
                let c = CycleChain::new(&g, StructureKind::Cycle, (0..n).collect());
                (g, c)
            } else {
                line_chain(&weights)
            };
            let spec = DistributionSpec::new(probs, crate::uncertainty::Provenance {
                kind: crate::uncertainty::DistributionKind::Custom, seed: None, high_risk: vec![],
            }).unwrap();
            let e = pick % n;
            let q = EdgeSet::from_edges(n, (0..n).filter(|i| qmask >> i & 1 == 1 && *i != e));
            let r = EdgeSet::empty(n);
            let before = expected_structure_weight(&g, &c, &spec, &q, &r);
            // average over the new edge's response
            let q2 = q.with(e);
            let accepted = expected_structure_weight(&g, &c, &spec, &q2, &r);
            prop_assert!(accepted >= before - 1e-12);
            let p = spec.get(e).p_reject;
            let after = (1.0 - p) * accepted
                + p * expected_structure_weight(&g, &c, &spec, &q2, &r.with(e));
            prop_assert!(after >= before - 1e-12, "{} < {}", after, before);
        }
    }
}
