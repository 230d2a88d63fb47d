use super::{Evaluator, LegalEdgeSets};
use crate::uncertainty::QuerySet;

const TIE_EPS: f64 = 1e-12;

/// The path taken by greedy search.
///
/// The objective is not monotone, so the last node on the path need not be
/// the best one; both are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult {
    /// Edges in the order they were added.
    pub path: Vec<usize>,
    /// `values[k]` is the objective after the first `k` edges.
    pub values: Vec<f64>,
    universe: usize,
}

impl GreedyResult {
    /// The final node when the budget is `gamma`.
    pub fn final_node(&self, gamma: usize) -> (QuerySet, f64) {
        let k = gamma.min(self.path.len());
        (self.prefix(k), self.values[k])
    }

    /// The best node among the first `gamma + 1` nodes of the path.
    /// Earlier nodes win ties.
    pub fn best_node(&self, gamma: usize) -> (QuerySet, f64) {
        let k = gamma.min(self.path.len());
        let mut best = 0;
        for i in 1..=k {
            if self.values[i] > self.values[best] + TIE_EPS {
                best = i;
            }
        }
        (self.prefix(best), self.values[best])
    }

    fn prefix(&self, k: usize) -> QuerySet {
        QuerySet::from_edges(self.universe, self.path[..k].iter().copied())
    }
}

/// Greedy search from the empty set: repeatedly move to the child with the
/// largest objective (smallest added edge on ties) until no child is legal.
///
/// Since the budget only limits depth, the path for a smaller budget is a
/// prefix of this one; see [`GreedyResult::final_node`].
pub fn greedy_single_stage(eval: &Evaluator<'_>, legal: &LegalEdgeSets) -> GreedyResult {
    let mut q = eval.instance().empty_set();
    let mut result = GreedyResult { path: Vec::new(), values: vec![eval.objective(&q)], universe: q.universe() };
    loop {
        let mut best: Option<(usize, f64)> = None;
        for e in legal.extensions(&q) {
            let v = eval.objective(&q.with(e));
            if best.is_none_or(|(_, b)| v > b + TIE_EPS) {
                best = Some((e, v));
            }
        }
        let Some((e, v)) = best else { break };
        q.insert(e);
        result.path.push(e);
        result.values.push(v);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{fixtures, ExchangeGraph, VertexKind};
    use crate::matching::PolicyKind;
    use crate::selection::{exhaustive_search, EvalConfig, Instance, LegalConfig};
    use crate::uncertainty::make_simple;

    #[test]
    fn counterexample_ground_set() {
        let g = fixtures::counterexample();
        let spec = make_simple(&g);
        let inst = Instance::new(g, spec).unwrap();
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
        let legal = LegalEdgeSets::new(
            &inst.graph,
            &LegalConfig { budget: Some(3), ground_set: Some(vec![0, 1, 2]), ..Default::default() },
        )
        .unwrap();
        let res = greedy_single_stage(&eval, &legal);
        assert_eq!(res.path.len(), 3);
        let opt = exhaustive_search(&eval, &legal, 100).unwrap();
        for gamma in 0..=3 {
            assert!(opt.best_up_to(gamma).1 + 1e-12 >= res.best_node(gamma).1);
            assert!(res.best_node(gamma).1 + 1e-12 >= res.final_node(gamma).1);
        }
        // querying A->B alone: 1/2 * (3.5/8) + 1/2 * (1 + 3/8) = 29/32
        assert_eq!(res.path[0], 0);
        assert!((res.values[1] - 29.0 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn ties_pick_smallest_edge() {
        // two symmetric disjoint 2-cycles: every single query has equal value
        let g = ExchangeGraph::from_parts(
            &[VertexKind::Pair; 4],
            &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)],
        )
        .unwrap();
        let spec = make_simple(&g);
        let inst = Instance::new(g, spec).unwrap();
        let eval = Evaluator::new(&inst, PolicyKind::FailureAware, EvalConfig::default());
        let res = greedy_single_stage(&eval, &LegalEdgeSets::with_budget(&inst.graph, 1));
        assert_eq!(res.path, vec![0]);
    }

    #[test]
    fn prefix_consistency() {
        let g = crate::graph::generate_random_graph(50, 0.01, 11);
        let spec = make_simple(&g);
        let inst = Instance::new(g, spec).unwrap();
        let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
        let long = greedy_single_stage(&eval, &LegalEdgeSets::with_budget(&inst.graph, 4));
        let short = greedy_single_stage(&eval, &LegalEdgeSets::with_budget(&inst.graph, 2));
        assert_eq!(&long.path[..2], &short.path[..]);
        assert_eq!(long.final_node(2), short.final_node(2));
    }
}
