use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{derive_seed, prepare_graphs, ExperimentConfig, Method, MethodResult, PreparedGraph, RunResult, SeedStream};
use crate::error::{Error, Result};
use crate::matching::PolicyKind;
use crate::selection::{exhaustive_search, greedy_single_stage, mcts_single_stage, LegalEdgeSets, MctsConfig};
use crate::uncertainty::QuerySet;

/// Runs every configured method at every budget on every graph.
///
/// Each (graph, method, Γ) gets a fresh evaluator, so its oracle count
/// does not depend on what ran before it. An exhaustive search that hits
/// its node cap produces a row with the reason instead of a value.
pub fn run_single_stage(cfg: &ExperimentConfig) -> Result<RunResult> {
    let (graphs, filtered) = prepare_graphs(cfg)?;
    let per_graph: Vec<Vec<MethodResult>> = graphs
        .par_iter()
        .map(|g| {
            let mut rows = Vec::new();
            for &gamma in &cfg.budgets {
                for &method in &cfg.methods {
                    rows.push(run_method(cfg, g, method, gamma)?);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(RunResult {
        config: cfg.clone(),
        graphs: graphs.iter().map(PreparedGraph::summary).collect(),
        filtered,
        rows: per_graph.into_iter().flatten().collect(),
    })
}

fn run_method(cfg: &ExperimentConfig, g: &PreparedGraph, method: Method, gamma: usize) -> Result<MethodResult> {
    let started = Instant::now();
    let legal = cfg.legal(&g.instance.graph, gamma)?;
    let policy = if method == Method::FailAware { PolicyKind::FailureAware } else { cfg.policy };
    let eval = g.evaluator(cfg, policy);
    let empty = g.instance.empty_set();

    let found: std::result::Result<(QuerySet, f64), String> = match method {
        Method::None | Method::FailAware => Ok((empty.clone(), eval.objective(&empty))),
        Method::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(g.seed, SeedStream::Random, gamma as u64));
            let q = random_maximal_set(&legal, empty, &mut rng);
            let v = eval.objective(&q);
            Ok((q, v))
        }
        Method::Greedy => Ok(greedy_single_stage(&eval, &legal).best_node(gamma)),
        Method::GreedyFinal => Ok(greedy_single_stage(&eval, &legal).final_node(gamma)),
        Method::Mcts => {
            let mcts = MctsConfig {
                lookahead: cfg.mcts_lookahead,
                budget: cfg.mcts_budget,
                seed: derive_seed(g.seed, SeedStream::Mcts, gamma as u64),
            };
            let res = mcts_single_stage(&eval, &legal, &mcts);
            Ok((res.best, res.value))
        }
        Method::Exhaustive => match exhaustive_search(&eval, &legal, cfg.exhaustive_node_cap) {
            Ok(res) => Ok(res.best()),
            Err(e @ Error::NodeCapExceeded { .. }) => Err(e.to_string()),
            Err(e) => return Err(e),
        },
    };

    let row = match found {
        Ok((q, v)) => MethodResult::ok(g, method, gamma, v, q.to_vec()),
        Err(reason) => MethodResult::skipped(g, method, gamma, reason),
    };
    Ok(MethodResult { runtime_secs: started.elapsed().as_secs_f64(), ..row.with_counts(&eval) })
}

/// Adds uniformly chosen legal edges until none can be added.
pub(crate) fn random_maximal_set(legal: &LegalEdgeSets, mut q: QuerySet, rng: &mut impl Rng) -> QuerySet {
    loop {
        let ext = legal.extensions(&q);
        if ext.is_empty() {
            return q;
        }
        q.insert(ext[rng.random_range(0..ext.len())]);
    }
}
