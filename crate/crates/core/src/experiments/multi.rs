use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{derive_seed, prepare_graphs, ExperimentConfig, Method, MethodResult, PreparedGraph, RunResult, SeedStream};
use crate::error::Result;
use crate::selection::{greedy_next_edge, mcts_next_edge, random_next_edge, Estimate, MctsConfig};
use crate::uncertainty::{sample_rejections, EdgeSet, Phase, ScenarioStream};

/// Simulates the sequential query loop for every configured method.
///
/// A realization fixes the response of every edge up front (drawn from
/// the rejection probabilities), so all methods and budgets on a graph face
/// the same responses. Each realization queries up to Γ edges one at a
/// time, then records the expected final weight `W(M(r); q, r)`. One row
/// per realization plus an aggregate row whose objective is the mean.
/// Methods without a sequential form get a skipped row.
pub fn run_multi_stage(cfg: &ExperimentConfig) -> Result<RunResult> {
    let (graphs, filtered) = prepare_graphs(cfg)?;
    let per_graph: Vec<Vec<MethodResult>> = graphs
        .par_iter()
        .map(|g| {
            let mut rows = Vec::new();
            for &gamma in &cfg.budgets {
                for &method in &cfg.methods {
                    if method.is_multi_stage() {
                        rows.extend(simulate(cfg, g, method, gamma)?);
                    } else {
                        rows.push(MethodResult::skipped(g, method, gamma, format!("{method} has no sequential form")));
                    }
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

fn simulate(cfg: &ExperimentConfig, g: &PreparedGraph, method: Method, gamma: usize) -> Result<Vec<MethodResult>> {
    let started = Instant::now();
    let legal = cfg.legal(&g.instance.graph, gamma)?;
    let eval = g.evaluator(cfg, cfg.policy);
    let m = g.instance.edge_count();
    let everything = EdgeSet::full(m);
    let realization_seed = derive_seed(g.seed, SeedStream::Realization, 0);
    let method_seed = derive_seed(g.seed, if method == Method::Mcts { SeedStream::Mcts } else { SeedStream::Random }, gamma as u64);

    let mut rows = Vec::with_capacity(cfg.realizations + 1);
    for j in 0..cfg.realizations {
        let step_started = Instant::now();
        let (oracle_before, solver_before) = (eval.oracle_calls(), eval.solver_calls());
        let truth = sample_rejections(
            &g.instance.spec,
            &everything,
            &ScenarioStream::new(realization_seed, Phase::Realization, j as u64),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(method_seed, SeedStream::Realization, j as u64));
        let mut q = EdgeSet::empty(m);
        let mut r = EdgeSet::empty(m);
        loop {
            let next = match method {
                Method::Random => random_next_edge(&legal, &q, &mut rng),
                Method::Greedy => greedy_next_edge(&eval, &legal, &q, &r)?.map(|n| n.edge),
                Method::Mcts => {
                    let search = MctsConfig { lookahead: cfg.mcts_lookahead, budget: cfg.mcts_budget, seed: rng.next_u64() };
                    mcts_next_edge(&eval, &legal, &q, &r, &search)?.map(|n| n.edge)
                }
                _ => None,
            };
            let Some(e) = next else { break };
            q.insert(e);
            if truth.contains(e) {
                r.insert(e);
            }
        }
        let value = eval.outcome_value(&q, &r)?;
        rows.push(MethodResult {
            realization: Some(j),
            oracle_calls: eval.oracle_calls() - oracle_before,
            solver_calls: eval.solver_calls() - solver_before,
            runtime_secs: step_started.elapsed().as_secs_f64(),
            ..MethodResult::ok(g, method, gamma, value, q.to_vec())
        });
    }

    let values: Vec<f64> = rows.iter().filter_map(|r| r.objective).collect();
    let estimate = Estimate::from_values(&values);
    rows.push(MethodResult {
        std_err: Some(estimate.std_err),
        runtime_secs: started.elapsed().as_secs_f64(),
        ..MethodResult::ok(g, method, gamma, estimate.mean, Vec::new()).with_counts(&eval)
    });
    Ok(rows)
}
