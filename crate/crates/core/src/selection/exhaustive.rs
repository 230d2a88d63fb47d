use super::{Evaluator, LegalEdgeSets};
use crate::error::{Error, Result};
use crate::uncertainty::QuerySet;

/// Default limit on the number of nodes an exhaustive search may visit.
pub const DEFAULT_NODE_CAP: usize = 2_000_000;

const TIE_EPS: f64 = 1e-12;

/// Outcome of a complete enumeration of the legal query sets.
#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    /// Best set of each size, first found in search order; index = size.
    pub best_by_size: Vec<(QuerySet, f64)>,
    pub nodes_visited: usize,
}

impl ExhaustiveResult {
    /// Best set with at most `gamma` edges. Smaller sets win ties.
    pub fn best_up_to(&self, gamma: usize) -> (QuerySet, f64) {
        let mut best = self.best_by_size[0].clone();
        for (q, v) in self.best_by_size.iter().take(gamma + 1).skip(1) {
            if *v > best.1 + TIE_EPS {
                best = (q.clone(), *v);
            }
        }
        best
    }

    pub fn best(&self) -> (QuerySet, f64) {
        self.best_up_to(self.best_by_size.len() - 1)
    }
}

/// Depth-first enumeration of every legal query set.
///
/// The search tree is the child relation `C(q)`; each set is visited once
/// by only adding edges larger than the current largest. Children are taken
/// in ascending edge order, so "first found" is a fixed tie-break.
pub fn exhaustive_search(eval: &Evaluator<'_>, legal: &LegalEdgeSets, node_cap: usize) -> Result<ExhaustiveResult> {
    let root = eval.instance().empty_set();
    let mut state = Search {
        eval,
        legal,
        node_cap,
        visited: 0,
        best_by_size: vec![None; legal.max_size() + 1],
    };
    state.visit(&root)?;
    Ok(ExhaustiveResult {
        best_by_size: state.best_by_size.into_iter().map(|b| b.expect("every size up to the rank is reachable")).collect(),
        nodes_visited: state.visited,
    })
}

/// Optimal legal query set at any level, with its value.
pub fn exhaustive_opt(eval: &Evaluator<'_>, legal: &LegalEdgeSets, node_cap: usize) -> Result<(QuerySet, f64)> {
    Ok(exhaustive_search(eval, legal, node_cap)?.best())
}

struct Search<'e, 'a> {
    eval: &'e Evaluator<'a>,
    legal: &'e LegalEdgeSets,
    node_cap: usize,
    visited: usize,
    best_by_size: Vec<Option<(QuerySet, f64)>>,
}

impl Search<'_, '_> {
    fn visit(&mut self, q: &QuerySet) -> Result<()> {
        if self.visited >= self.node_cap {
            let (best_edges, best_value) = self
                .best_by_size
                .iter()
                .flatten()
                .fold((Vec::new(), f64::NEG_INFINITY), |acc, (q, v)| {
                    if *v > acc.1 + TIE_EPS { (q.to_vec(), *v) } else { acc }
                });
            return Err(Error::NodeCapExceeded { visited: self.visited, cap: self.node_cap, best_edges, best_value });
        }
        self.visited += 1;
        let value = self.eval.objective(q);
        let slot = &mut self.best_by_size[q.count()];
        if slot.as_ref().is_none_or(|(_, v)| value > *v + TIE_EPS) {
            *slot = Some((q.clone(), value));
        }
        let floor = q.max_edge().map_or(0, |m| m + 1);
        for e in self.legal.extensions(q) {
            if e >= floor {
                self.visit(&q.with(e))?;
            }
        }
        Ok(())
    }
}
