use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ucb::ValueRange;
use super::{ucb_score, Evaluator, LegalEdgeSets, MctsConfig, SearchBudget, UcbStats};
use crate::uncertainty::QuerySet;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MctsResult {
    /// Best query set evaluated anywhere in the search, including rollouts.
    pub best: QuerySet,
    pub value: f64,
    /// Best value known after each level (index 0 is the empty set).
    pub trace: Vec<f64>,
    /// Root after each advancement.
    pub roots: Vec<QuerySet>,
    pub iterations: u64,
}

/// Single-stage UCT search with iterative root advancement.
///
/// For each level the search keeps statistics for nodes up to `lookahead`
/// levels below the root's children (allocated on first visit), samples
/// from the root until the level budget runs out, then moves the root to
/// the child with the largest accumulated value and drops the statistics.
/// Every node evaluated on the way, including random rollout descendants,
/// competes for the returned best set.
pub fn mcts_single_stage(eval: &Evaluator<'_>, legal: &LegalEdgeSets, config: &MctsConfig) -> MctsResult {
    let k = legal.max_size();
    let mut search = Search {
        eval,
        legal,
        k,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        stats: HashMap::new(),
        range: ValueRange::default(),
        best: (eval.instance().empty_set(), f64::NEG_INFINITY),
        window_end: 0,
    };
    let mut root = eval.instance().empty_set();
    search.evaluate(&root);
    let mut trace = vec![search.best.1];
    let mut roots = Vec::new();
    let mut iterations = 0;

    for level in 1..=k {
        search.window_end = (level + config.lookahead).min(k);
        search.stats.clear();
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
            search.sample(&root);
            n += 1;
        }
        iterations += n;

        let mut next: Option<(usize, f64)> = None;
        for e in legal.extensions(&root) {
            let u = search.stats.get(&root.with(e)).map_or(0.0, |s| s.total_value);
            if next.is_none_or(|(_, best)| u > best) {
                next = Some((e, u));
            }
        }
        let Some((e, _)) = next else { break };
        root.insert(e);
        roots.push(root.clone());
        trace.push(search.best.1);
    }

    let (best, value) = search.best;
    MctsResult { best, value, trace, roots, iterations }
}

struct Search<'e, 'a> {
    eval: &'e Evaluator<'a>,
    legal: &'e LegalEdgeSets,
    k: usize,
    rng: ChaCha8Rng,
    stats: HashMap<QuerySet, UcbStats>,
    range: ValueRange,
    best: (QuerySet, f64),
    window_end: usize,
}

impl Search<'_, '_> {
    fn evaluate(&mut self, q: &QuerySet) -> f64 {
        let v = self.eval.objective(q);
        self.range.observe(v);
        if v > self.best.1 + TIE_EPS {
            self.best = (q.clone(), v);
        }
        v
    }

    /// One sampling pass from `q`; returns the value propagated upward.
    fn sample(&mut self, q: &QuerySet) -> f64 {
        let own = self.evaluate(q);
        let extensions = self.legal.extensions(q);
        let value = if extensions.is_empty() {
            own
        } else if q.count() < self.window_end {
            let parent_visits = self.stats.get(q).map_or(0, |s| s.visits) + 1;
            let mut choice = extensions[0];
            let mut choice_score = f64::NEG_INFINITY;
            for &e in &extensions {
                let child = self.stats.get(&q.with(e)).copied().unwrap_or_default();
                let score = ucb_score(&child, parent_visits, self.range.min, self.range.max);
                if score > choice_score {
                    choice = e;
                    choice_score = score;
                }
            }
            self.sample(&q.with(choice))
        } else {
            let leaf = self.random_descendant(q);
            self.evaluate(&leaf)
        };
        self.stats.entry(q.clone()).or_default().record(value);
        value
    }

    /// Uniform depth in `|q|+1 ..= K`, then a uniformly random legal completion.
    fn random_descendant(&mut self, q: &QuerySet) -> QuerySet {
        let depth = self.rng.random_range(q.count() + 1..=self.k);
        let mut out = q.clone();
        while out.count() < depth {
            let ext = self.legal.extensions(&out);
            if ext.is_empty() {
                break;
            }
            out.insert(ext[self.rng.random_range(0..ext.len())]);
        }
        out
    }
}
