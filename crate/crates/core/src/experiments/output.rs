use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BootstrapRun, ExperimentConfig, FilteredGraph, GraphSummary, OptGapRun, PreparedGraph, RunResult};
use crate::error::Result;
use crate::uncertainty::DistributionFile;

/// Describes one harness invocation. Feeding `config` (and `parameters`)
/// back to the same command reproduces every CSV byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Command-specific settings that are not part of the config.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub parameters: serde_json::Value,
    pub graphs: Vec<GraphSummary>,
    pub filtered: Vec<FilteredGraph>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Paths written by one command.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl OutputFiles {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        let mut any = false;
        for row in rows {
            w.serialize(row)?;
            any = true;
        }
        if !any {
            // keep the file present even without rows
            w.write_record(std::iter::empty::<&str>())?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(
        mut self,
        command: &str,
        config: &ExperimentConfig,
        parameters: serde_json::Value,
        graphs: &[GraphSummary],
        filtered: &[FilteredGraph],
    ) -> Result<OutputFiles> {
        self.files.push(MANIFEST_FILE.to_string());
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            parameters,
            graphs: graphs.to_vec(),
            filtered: filtered.to_vec(),
            files: self.files.clone(),
        };
        fs::write(self.dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(OutputFiles { dir: self.dir, files: self.files })
    }
}

#[derive(Serialize)]
struct ResultRecord<'a> {
    graph_id: usize,
    method: &'a str,
    gamma: usize,
    realization: String,
    objective: Option<f64>,
    std_err: Option<f64>,
    delta_max: Option<f64>,
    query_size: usize,
    queried_edges: String,
    oracle_calls: u64,
    solver_calls: u64,
    status: &'a str,
    note: &'a str,
}

#[derive(Serialize)]
struct TimingRecord<'a> {
    graph_id: usize,
    method: &'a str,
    gamma: usize,
    realization: String,
    runtime_secs: f64,
}

fn realization_label(r: Option<usize>) -> String {
    r.map_or_else(|| "aggregate".to_string(), |j| j.to_string())
}

fn join(edges: &[usize]) -> String {
    edges.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Writes a single- or multi-stage run: `results.csv`, `summary.csv`,
/// `graphs.csv` and `manifest.json`, plus `timings.csv` when asked. Only
/// the timings file varies between identical runs.
pub fn write_run(dir: &Path, command: &str, run: &RunResult, timings: bool) -> Result<OutputFiles> {
    let mut w = Writer::new(dir)?;
    w.csv(
        "results.csv",
        run.rows.iter().map(|r| ResultRecord {
            graph_id: r.graph_id,
            method: r.method.as_str(),
            gamma: r.gamma,
            realization: realization_label(r.realization),
            objective: r.objective,
            std_err: r.std_err,
            delta_max: r.delta_max,
            query_size: r.queried_edges.len(),
            queried_edges: join(&r.queried_edges),
            oracle_calls: r.oracle_calls,
            solver_calls: r.solver_calls,
            status: if r.skipped.is_some() { "skipped" } else { "ok" },
            note: r.skipped.as_deref().unwrap_or(""),
        }),
    )?;
    w.csv("summary.csv", run.summary())?;
    w.csv("graphs.csv", &run.graphs)?;
    if timings {
        w.csv(
            "timings.csv",
            run.rows.iter().map(|r| TimingRecord {
                graph_id: r.graph_id,
                method: r.method.as_str(),
                gamma: r.gamma,
                realization: realization_label(r.realization),
                runtime_secs: r.runtime_secs,
            }),
        )?;
    }
    w.finish(command, &run.config, serde_json::Value::Null, &run.graphs, &run.filtered)
}

pub fn write_bootstrap(dir: &Path, run: &BootstrapRun) -> Result<OutputFiles> {
    let mut w = Writer::new(dir)?;
    w.csv("bootstrap.csv", &run.rows)?;
    w.csv("summary.csv", run.summary())?;
    w.csv("graphs.csv", &run.graphs)?;
    let parameters = serde_json::json!({ "sample_sizes": run.sample_sizes, "replications": run.replications });
    w.finish("bootstrap", &run.config, parameters, &run.graphs, &run.filtered)
}

#[derive(Serialize)]
struct OptGapRecord<'a> {
    graph_id: usize,
    gamma: usize,
    opt_value: Option<f64>,
    opt_edges: String,
    greedy_value: f64,
    greedy_edges: String,
    greedy_final_value: f64,
    pct_opt: Option<f64>,
    pct_opt_final: Option<f64>,
    matches_opt: Option<bool>,
    nodes_visited: usize,
    status: &'a str,
    note: &'a str,
}

pub fn write_opt_gap(dir: &Path, run: &OptGapRun) -> Result<OutputFiles> {
    let mut w = Writer::new(dir)?;
    w.csv(
        "opt_gap.csv",
        run.rows.iter().map(|r| OptGapRecord {
            graph_id: r.graph_id,
            gamma: r.gamma,
            opt_value: r.opt_value,
            opt_edges: join(&r.opt_edges),
            greedy_value: r.greedy_value,
            greedy_edges: join(&r.greedy_edges),
            greedy_final_value: r.greedy_final_value,
            pct_opt: r.pct_opt,
            pct_opt_final: r.pct_opt_final,
            matches_opt: r.matches_opt,
            nodes_visited: r.nodes_visited,
            status: if r.skipped.is_some() { "skipped" } else { "ok" },
            note: r.skipped.as_deref().unwrap_or(""),
        }),
    )?;
    w.csv("summary.csv", run.summary())?;
    w.csv("graphs.csv", &run.graphs)?;
    w.finish("opt-gap", &run.config, serde_json::Value::Null, &run.graphs, &run.filtered)
}

/// Writes each graph and its distribution as JSON files, with a
/// `graphs.csv` index and the manifest.
pub fn write_graphs(
    dir: &Path,
    config: &ExperimentConfig,
    graphs: &[PreparedGraph],
    filtered: &[FilteredGraph],
) -> Result<OutputFiles> {
    let mut w = Writer::new(dir)?;
    for g in graphs {
        w.text(&format!("graph_{:04}.json", g.id), &(g.instance.graph.to_json()? + "\n"))?;
        let dist = serde_json::to_string_pretty(&DistributionFile::from(&g.instance.spec))?;
        w.text(&format!("distribution_{:04}.json", g.id), &(dist + "\n"))?;
    }
    let summaries: Vec<GraphSummary> = graphs.iter().map(PreparedGraph::summary).collect();
    w.csv("graphs.csv", &summaries)?;
    w.finish("gen-graph", config, serde_json::Value::Null, &summaries, filtered)
}
