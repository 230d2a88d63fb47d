//! Picking the next edge to query when responses arrive one at a time.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ucb::ValueRange;
use super::{ucb_score, Evaluator, LegalEdgeSets, MctsConfig, SearchBudget, UcbStats};
use crate::error::Result;
use crate::uncertainty::{check_consistent, EdgeSet, QuerySet, RejectionVector};

/// A recommended edge with its one-step look-ahead values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextEdge {
    pub edge: usize,
    /// Probability the edge is rejected, given the responses so far.
    pub p_reject: f64,
    /// `W(M(r); q + e, r)`: value if the edge is accepted and querying stops.
    pub accept_value: f64,
    /// Value if the edge is rejected and querying stops.
    pub reject_value: f64,
    /// `(1 - p_reject) * accept_value + p_reject * reject_value`.
    pub expected_value: f64,
    /// Mean value of the edge's subtree in a tree search, when one was run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_visits: Option<u64>,
}

fn one_step(eval: &Evaluator<'_>, q: &QuerySet, r: &RejectionVector, e: usize) -> NextEdge {
    // independent edges: conditioning on earlier responses leaves P_R unchanged
    let p_reject = eval.instance().spec.get(e).p_reject;
    let q2 = q.with(e);
    let accept_value = eval.outcome_value(&q2, r).expect("r is consistent with q");
    let reject_value = eval.outcome_value(&q2, &r.with(e)).expect("r + e is consistent with q + e");
    NextEdge {
        edge: e,
        p_reject,
        accept_value,
        reject_value,
        expected_value: (1.0 - p_reject) * accept_value + p_reject * reject_value,
        search_value: None,
        search_visits: None,
    }
}

/// Myopic choice: the legal edge whose query maximizes the expected value
/// of stopping right after its response. The first edge (smallest id) wins
/// ties. `None` when no legal extension exists.
pub fn greedy_next_edge(
    eval: &Evaluator<'_>,
    legal: &LegalEdgeSets,
    q: &QuerySet,
    r: &RejectionVector,
) -> Result<Option<NextEdge>> {
    check_consistent(q, r)?;
    legal.check(q)?;
    let mut best: Option<NextEdge> = None;
    for e in legal.extensions(q) {
        let candidate = one_step(eval, q, r, e);
        if best.as_ref().is_none_or(|b| candidate.expected_value > b.expected_value) {
            best = Some(candidate);
        }
    }
    Ok(best)
}

/// A uniformly random legal edge.
pub fn random_next_edge(legal: &LegalEdgeSets, q: &QuerySet, rng: &mut impl Rng) -> Option<usize> {
    let ext = legal.extensions(q);
    (!ext.is_empty()).then(|| ext[rng.random_range(0..ext.len())])
}

/// Multi-stage UCT search over alternating outcome nodes `(q, r)` and query
/// nodes `(q, r, e)`.
///
/// Query nodes get statistics down to `lookahead` levels below the current
/// state. Below that window a random leaf is reached by adding random legal
/// edges with responses drawn from their rejection probabilities; only
/// leaves (maximal legal sets) are valued. The root always descends into a
/// query node, so statistics exist even when a single query remains. The
/// recommendation is the root query node with the largest accumulated
/// value, smallest edge on ties.
pub fn mcts_next_edge(
    eval: &Evaluator<'_>,
    legal: &LegalEdgeSets,
    q: &QuerySet,
    r: &RejectionVector,
    config: &MctsConfig,
) -> Result<Option<NextEdge>> {
    check_consistent(q, r)?;
    legal.check(q)?;
    let extensions = legal.extensions(q);
    if extensions.is_empty() {
        return Ok(None);
    }
    let k = legal.max_size();
    let level = q.count() + 1;
    let mut search = Tree {
        eval,
        legal,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        query_stats: HashMap::new(),
        outcome_visits: HashMap::new(),
        range: ValueRange::default(),
        window_end: (level + config.lookahead).min(k),
        root_level: q.count(),
    };

    let started = Instant::now();
    let mut n = 0u64;
    loop {
        let done = match config.budget {
            SearchBudget::Iterations(limit) => n >= limit,
            SearchBudget::WallClock(limit) => n > 0 && started.elapsed() >= limit,
        };
        if done {
            break;
        }
        search.q_sample(q, r);
        n += 1;
    }

    let mut best: Option<(usize, UcbStats)> = None;
    for &e in &extensions {
        let stats = search.query_stats.get(&(q.clone(), r.clone(), e)).copied().unwrap_or_default();
        if best.is_none_or(|(_, b)| stats.total_value > b.total_value) {
            best = Some((e, stats));
        }
    }
    let (edge, stats) = best.expect("extensions is not empty");
    let mut next = one_step(eval, q, r, edge);
    next.search_value = stats.mean();
    next.search_visits = Some(stats.visits);
    Ok(Some(next))
}

type QueryKey = (EdgeSet, EdgeSet, usize);

struct Tree<'e, 'a> {
    eval: &'e Evaluator<'a>,
    legal: &'e LegalEdgeSets,
    rng: ChaCha8Rng,
    query_stats: HashMap<QueryKey, UcbStats>,
    outcome_visits: HashMap<(EdgeSet, EdgeSet), u64>,
    range: ValueRange,
    window_end: usize,
    root_level: usize,
}

impl Tree<'_, '_> {
    fn leaf_value(&mut self, q: &QuerySet, r: &RejectionVector) -> f64 {
        let v = self.eval.outcome_value(q, r).expect("tree states are consistent");
        self.range.observe(v);
        v
    }

    fn respond(&mut self, e: usize, r: &RejectionVector) -> RejectionVector {
        let p = self.eval.instance().spec.get(e).p_reject;
        if self.rng.random::<f64>() < p {
            r.with(e)
        } else {
            r.clone()
        }
    }

    fn q_sample(&mut self, q: &QuerySet, r: &RejectionVector) -> f64 {
        let extensions = self.legal.extensions(q);
        if extensions.is_empty() {
            return self.leaf_value(q, r);
        }
        let in_window = q.count() + 1 < self.window_end || q.count() == self.root_level;
        if !in_window {
            let (mut q2, mut r2) = (q.clone(), r.clone());
            loop {
                let ext = self.legal.extensions(&q2);
                if ext.is_empty() {
                    break;
                }
                let e = ext[self.rng.random_range(0..ext.len())];
                r2 = self.respond(e, &r2);
                q2.insert(e);
            }
            return self.leaf_value(&q2, &r2);
        }
        let visits = self.outcome_visits.entry((q.clone(), r.clone())).or_default();
        *visits += 1;
        let parent_visits = *visits;
        let mut choice = extensions[0];
        let mut choice_score = f64::NEG_INFINITY;
        for &e in &extensions {
            let stats = self.query_stats.get(&(q.clone(), r.clone(), e)).copied().unwrap_or_default();
            let score = ucb_score(&stats, parent_visits, self.range.min, self.range.max);
            if score > choice_score {
                choice = e;
                choice_score = score;
            }
        }
        self.o_sample(q, r, choice)
    }

    fn o_sample(&mut self, q: &QuerySet, r: &RejectionVector, e: usize) -> f64 {
        let r2 = self.respond(e, r);
        let value = self.q_sample(&q.with(e), &r2);
        self.query_stats.entry((q.clone(), r.clone(), e)).or_default().record(value);
        value
    }
}
