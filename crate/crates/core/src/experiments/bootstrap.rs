use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    compute_pct_opt, derive_seed, percentile, prepare_graphs, ExperimentConfig, FilteredGraph, GraphSummary,
    PreparedGraph, SeedStream,
};
use crate::error::{Error, Result};
use crate::selection::{exhaustive_search, greedy_single_stage, Evaluator};
use crate::uncertainty::QuerySet;

/// Normalized standard deviation of bootstrap means, for each sample size.
///
/// For each `N`, draws `N` values from `pool` with replacement and takes
/// their mean, `replications` times; returns the sample standard deviation
/// of those means divided by the pool mean. An all-zero pool gives 0.
pub fn bootstrap_objective_std(pool: &[f64], sample_sizes: &[usize], replications: usize, seed: u64) -> Vec<(usize, f64)> {
    let pool_mean = pool.iter().sum::<f64>() / pool.len().max(1) as f64;
    sample_sizes
        .iter()
        .map(|&n| {
            if pool.is_empty() || n == 0 || replications < 2 || pool_mean == 0.0 {
                return (n, 0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SeedStream::Bootstrap, n as u64));
            let means: Vec<f64> = (0..replications)
                .map(|_| (0..n).map(|_| pool[rng.random_range(0..pool.len())]).sum::<f64>() / n as f64)
                .collect();
            let m = means.iter().sum::<f64>() / replications as f64;
            let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (replications - 1) as f64;
            (n, var.sqrt() / pool_mean)
        })
        .collect()
}

/// Samples a pool of `pool_size` rejection scenarios for `q` and runs
/// [`bootstrap_objective_std`] on their values. Returns the pool mean too.
pub fn bootstrap_query_set(
    eval: &Evaluator<'_>,
    q: &QuerySet,
    pool_size: usize,
    sample_sizes: &[usize],
    replications: usize,
    seed: u64,
) -> (f64, Vec<(usize, f64)>) {
    let pool = eval.scenario_values(q, pool_size);
    let mean = pool.iter().sum::<f64>() / pool.len().max(1) as f64;
    (mean, bootstrap_objective_std(&pool, sample_sizes, replications, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub graph_id: usize,
    pub gamma: usize,
    pub query_size: usize,
    /// Queried edges that belong to some cycle or chain.
    pub relevant_size: usize,
    pub pool_size: usize,
    pub pool_mean: f64,
    pub sample_size: usize,
    pub normalized_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummaryRow {
    /// Budgets grouped in tens: "1-10", "11-20", ...; "0" for Γ = 0.
    pub budget_bin: String,
    pub sample_size: usize,
    pub edge_sets: usize,
    pub median_normalized_std: f64,
}

#[derive(Debug, Clone)]
pub struct BootstrapRun {
    pub config: ExperimentConfig,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub graphs: Vec<GraphSummary>,
    pub filtered: Vec<FilteredGraph>,
    pub rows: Vec<BootstrapRow>,
}

impl BootstrapRun {
    /// Median (nearest-rank) normalized std per budget bin and sample size.
    pub fn summary(&self) -> Vec<BootstrapSummaryRow> {
        let bin = |gamma: usize| if gamma == 0 { 0 } else { (gamma - 1) / 10 + 1 };
        let mut keys: Vec<(usize, usize)> = self.rows.iter().map(|r| (bin(r.gamma), r.sample_size)).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(b, n)| {
                let values: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| bin(r.gamma) == b && r.sample_size == n)
                    .map(|r| r.normalized_std)
                    .collect();
                BootstrapSummaryRow {
                    budget_bin: if b == 0 { "0".into() } else { format!("{}-{}", 10 * b - 9, 10 * b) },
                    sample_size: n,
                    edge_sets: values.len(),
                    median_normalized_std: percentile(&values, 50.0),
                }
            })
            .collect()
    }
}

/// Sampling-noise study: for each graph and budget Γ, takes the final node
/// of a greedy run with budget Γ, draws a pool of `cfg.samples` scenario
/// values for it and bootstraps that pool.
pub fn run_bootstrap(cfg: &ExperimentConfig, sample_sizes: &[usize], replications: usize) -> Result<BootstrapRun> {
    let (graphs, filtered) = prepare_graphs(cfg)?;
    let max_gamma = cfg.budgets.iter().copied().max().unwrap_or(0);
    let per_graph: Vec<Vec<BootstrapRow>> = graphs
        .par_iter()
        .map(|g| {
            let eval = g.evaluator(cfg, cfg.policy);
            // the greedy path for a smaller budget is a prefix of this one
            let path = greedy_single_stage(&eval, &cfg.legal(&g.instance.graph, max_gamma)?);
            let mut rows = Vec::new();
            for &gamma in &cfg.budgets {
                let (q, _) = path.final_node(gamma);
                let seed = derive_seed(g.seed, SeedStream::Bootstrap, gamma as u64);
                let (pool_mean, stds) = bootstrap_query_set(&eval, &q, cfg.samples, sample_sizes, replications, seed);
                for (n, std) in stds {
                    rows.push(BootstrapRow {
                        graph_id: g.id,
                        gamma,
                        query_size: q.count(),
                        relevant_size: q.intersection(g.instance.relevant_edges()).count(),
                        pool_size: cfg.samples,
                        pool_mean,
                        sample_size: n,
                        normalized_std: std,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(BootstrapRun {
        config: cfg.clone(),
        sample_sizes: sample_sizes.to_vec(),
        replications,
        graphs: graphs.iter().map(PreparedGraph::summary).collect(),
        filtered,
        rows: per_graph.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptGapRow {
    pub graph_id: usize,
    pub gamma: usize,
    pub opt_value: Option<f64>,
    pub opt_edges: Vec<usize>,
    pub greedy_value: f64,
    pub greedy_edges: Vec<usize>,
    pub greedy_final_value: f64,
    /// `%OPT` of the best greedy node.
    pub pct_opt: Option<f64>,
    /// `%OPT` of the last greedy node.
    pub pct_opt_final: Option<f64>,
    pub matches_opt: Option<bool>,
    pub nodes_visited: usize,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptGapSummaryRow {
    pub gamma: usize,
    pub graphs: usize,
    pub matches: usize,
    pub max_pct_opt: f64,
    pub mean_pct_opt: f64,
    pub max_pct_opt_final: f64,
}

#[derive(Debug, Clone)]
pub struct OptGapRun {
    pub config: ExperimentConfig,
    pub graphs: Vec<GraphSummary>,
    pub filtered: Vec<FilteredGraph>,
    pub rows: Vec<OptGapRow>,
}

impl OptGapRun {
    pub fn summary(&self) -> Vec<OptGapSummaryRow> {
        let mut gammas: Vec<usize> = self.rows.iter().map(|r| r.gamma).collect();
        gammas.sort();
        gammas.dedup();
        gammas
            .into_iter()
            .map(|gamma| {
                let rows: Vec<&OptGapRow> = self.rows.iter().filter(|r| r.gamma == gamma && r.skipped.is_none()).collect();
                let gaps: Vec<f64> = rows.iter().filter_map(|r| r.pct_opt).collect();
                let max = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0, f64::max);
                OptGapSummaryRow {
                    gamma,
                    graphs: rows.len(),
                    matches: rows.iter().filter(|r| r.matches_opt == Some(true)).count(),
                    max_pct_opt: max(&mut gaps.iter().copied()),
                    mean_pct_opt: if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 },
                    max_pct_opt_final: max(&mut rows.iter().filter_map(|r| r.pct_opt_final)),
                }
            })
            .collect()
    }
}

/// Gaps below this many percent count as a match.
const MATCH_TOL_PCT: f64 = 1e-7;

/// Greedy against exhaustive search at every budget.
pub fn run_opt_gap(cfg: &ExperimentConfig) -> Result<OptGapRun> {
    let (graphs, filtered) = prepare_graphs(cfg)?;
    let per_graph: Vec<Vec<OptGapRow>> = graphs
        .par_iter()
        .map(|g| cfg.budgets.iter().map(|&gamma| opt_gap_row(cfg, g, gamma)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(OptGapRun {
        config: cfg.clone(),
        graphs: graphs.iter().map(PreparedGraph::summary).collect(),
        filtered,
        rows: per_graph.into_iter().flatten().collect(),
    })
}

fn opt_gap_row(cfg: &ExperimentConfig, g: &PreparedGraph, gamma: usize) -> Result<OptGapRow> {
    let eval = g.evaluator(cfg, cfg.policy);
    let legal = cfg.legal(&g.instance.graph, gamma)?;
    let path = greedy_single_stage(&eval, &legal);
    let (greedy_q, greedy_value) = path.best_node(gamma);
    let (_, greedy_final_value) = path.final_node(gamma);
    let mut row = OptGapRow {
        graph_id: g.id,
        gamma,
        opt_value: None,
        opt_edges: Vec::new(),
        greedy_value,
        greedy_edges: greedy_q.to_vec(),
        greedy_final_value,
        pct_opt: None,
        pct_opt_final: None,
        matches_opt: None,
        nodes_visited: 0,
        skipped: None,
    };
    let search = match exhaustive_search(&eval, &legal, cfg.exhaustive_node_cap) {
        Ok(s) => s,
        Err(e @ Error::NodeCapExceeded { .. }) => {
            row.skipped = Some(e.to_string());
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let (opt_q, opt_value) = search.best();
    row.opt_value = Some(opt_value);
    row.opt_edges = opt_q.to_vec();
    row.nodes_visited = search.nodes_visited;
    match compute_pct_opt(opt_value, greedy_value) {
        Ok(gap) => {
            row.pct_opt = Some(gap);
            row.pct_opt_final = Some(compute_pct_opt(opt_value, greedy_final_value)?);
            row.matches_opt = Some(gap <= MATCH_TOL_PCT);
        }
        Err(e @ Error::NonPositiveOptimum(_)) => row.skipped = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(row)
}
