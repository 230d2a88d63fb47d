//! `edgequery`: the experiment harness.
//!
//! Every subcommand builds an [`ExperimentConfig`] from defaults, an
//! optional `--config` file (a bare config or a previous run's
//! `manifest.json`) and command-line flags, in that order of precedence,
//! then writes CSV files and a manifest into the output directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use edgequery::experiments::{
    prepare_graphs, run_bootstrap, run_multi_stage, run_opt_gap, run_single_stage, write_bootstrap, write_graphs,
    write_opt_gap, write_run, DistributionChoice, ExperimentConfig, GraphSource, Manifest, Method, OutputFiles,
};
use edgequery::{PolicyKind, SearchBudget};

/// Environment variable that overrides the output directory.
const OUT_DIR_ENV: &str = "EDGEQUERY_OUT_DIR";

#[derive(Parser)]
#[command(name = "edgequery", version, about = "Edge query selection experiments for kidney exchange")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (and filter) graphs with their distributions as JSON.
    GenGraph(ConfigArgs),
    /// Choose a query set up front with each method and evaluate it.
    SingleStage(RunArgs),
    /// Query one edge at a time against simulated responses.
    MultiStage(RunArgs),
    /// Bootstrap the sampling noise of the objective on greedy query sets.
    Bootstrap(BootstrapArgs),
    /// Compare greedy against exhaustive search.
    OptGap(ConfigArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write timings.csv (wall-clock, so not reproducible).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Bootstrap sample sizes N.
    #[arg(long, value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    /// Bootstrap replications per sample size.
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistributionArg {
    Simple,
    Kpd,
    File,
}

#[derive(Args)]
struct ConfigArgs {
    /// Start from this config, or from the config of a previous run's manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: the loaded config's, else results/<command>].
    #[arg(long, env = OUT_DIR_ENV)]
    output_dir: Option<PathBuf>,

    /// Random graphs: number of vertices.
    #[arg(long, help_heading = "Graphs")]
    n: Option<usize>,
    /// Random graphs: edge probability.
    #[arg(long, help_heading = "Graphs")]
    p: Option<f64>,
    /// Random graphs: number of non-trivial graphs to keep.
    #[arg(long, help_heading = "Graphs")]
    count: Option<usize>,
    /// Use a single graph from a JSON file.
    #[arg(long, help_heading = "Graphs", conflicts_with = "fixture")]
    graph_file: Option<PathBuf>,
    /// Use a built-in graph (counterexample, chain-example).
    #[arg(long, help_heading = "Graphs")]
    fixture: Option<String>,
    #[arg(long, help_heading = "Graphs")]
    max_cycle_len: Option<usize>,
    #[arg(long, help_heading = "Graphs")]
    max_chain_len: Option<usize>,

    #[arg(long, value_enum, help_heading = "Distribution")]
    distribution: Option<DistributionArg>,
    /// Fraction of pair vertices treated as highly sensitized (kpd).
    #[arg(long, help_heading = "Distribution")]
    high_risk_fraction: Option<f64>,
    /// Distribution JSON (implies --distribution file).
    #[arg(long, help_heading = "Distribution")]
    distribution_file: Option<PathBuf>,
    #[arg(long, help_heading = "Distribution")]
    distribution_seed: Option<u64>,

    /// Matching policy: max_weight or failure_aware.
    #[arg(long, help_heading = "Selection")]
    policy: Option<PolicyKind>,
    /// Comma-separated: none, random, greedy, greedy_final, mcts, exhaustive, fail_aware.
    #[arg(long, value_delimiter = ',', help_heading = "Selection")]
    methods: Option<Vec<Method>>,
    /// Comma-separated edge budgets.
    #[arg(long, value_delimiter = ',', help_heading = "Selection")]
    budgets: Option<Vec<usize>>,
    /// At most this many queried edges per vertex.
    #[arg(long, help_heading = "Selection")]
    per_vertex_cap: Option<usize>,
    /// Comma-separated edge ids that may be queried.
    #[arg(long, value_delimiter = ',', help_heading = "Selection")]
    ground_set: Option<Vec<usize>>,
    /// Query sets with fewer relevant edges are evaluated exactly.
    #[arg(long, help_heading = "Selection")]
    exact_cap: Option<usize>,
    /// Scenarios drawn by the sampled estimator.
    #[arg(long, help_heading = "Selection")]
    samples: Option<usize>,
    #[arg(long, help_heading = "Selection")]
    mcts_lookahead: Option<usize>,
    /// Tree-search iterations per level or recommendation.
    #[arg(long, help_heading = "Selection", conflicts_with = "mcts_seconds")]
    mcts_iterations: Option<u64>,
    /// Wall-clock tree-search budget per level or recommendation.
    #[arg(long, help_heading = "Selection")]
    mcts_seconds: Option<f64>,
    #[arg(long, help_heading = "Selection")]
    exhaustive_node_cap: Option<usize>,
    /// Simulated response sets per graph (multi-stage).
    #[arg(long, help_heading = "Selection")]
    realizations: Option<usize>,
    /// Master seed for graphs, distributions and every search.
    #[arg(long)]
    seed: Option<u64>,
}

/// Config plus command parameters recovered from a manifest.
struct Loaded {
    config: ExperimentConfig,
    parameters: serde_json::Value,
}

fn load_config(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("command").is_some() {
        let manifest: Manifest = serde_json::from_value(value).context("reading manifest")?;
        Ok(Loaded { config: manifest.config, parameters: manifest.parameters })
    } else {
        let config = serde_json::from_value(value).with_context(|| format!("{} is not a valid config", path.display()))?;
        Ok(Loaded { config, parameters: serde_json::Value::Null })
    }
}

impl ConfigArgs {
    fn resolve(&self, command: &str) -> Result<Loaded> {
        let mut loaded = match &self.config {
            Some(path) => load_config(path)?,
            None => Loaded { config: ExperimentConfig::default(), parameters: serde_json::Value::Null },
        };
        let cfg = &mut loaded.config;

        if let Some(path) = &self.graph_file {
            cfg.graphs = GraphSource::File { path: path.clone() };
        } else if let Some(name) = &self.fixture {
            cfg.graphs = GraphSource::Fixture { name: name.clone() };
        }
        if self.n.is_some() || self.p.is_some() || self.count.is_some() {
            let (n, p, count) = match cfg.graphs {
                GraphSource::Random { n, p, count } => (n, p, count),
                _ if self.graph_file.is_some() || self.fixture.is_some() => {
                    bail!("--n/--p/--count only apply to random graphs")
                }
                _ => (50, 0.01, 10),
            };
            cfg.graphs = GraphSource::Random {
                n: self.n.unwrap_or(n),
                p: self.p.unwrap_or(p),
                count: self.count.unwrap_or(count),
            };
        }
        set(&mut cfg.max_cycle_len, self.max_cycle_len);
        set(&mut cfg.max_chain_len, self.max_chain_len);

        let kind = match (self.distribution, &self.distribution_file) {
            (None, Some(_)) => Some(DistributionArg::File),
            (kind, _) => kind,
        };
        match kind {
            Some(DistributionArg::Simple) => cfg.distribution = DistributionChoice::Simple,
            Some(DistributionArg::Kpd) => {
                let current = match cfg.distribution {
                    DistributionChoice::Kpd { high_risk_fraction } => high_risk_fraction,
                    _ => 0.0,
                };
                cfg.distribution = DistributionChoice::Kpd { high_risk_fraction: self.high_risk_fraction.unwrap_or(current) };
            }
            Some(DistributionArg::File) => {
                let path = self.distribution_file.clone().context("--distribution file needs --distribution-file")?;
                cfg.distribution = DistributionChoice::File { path };
            }
            None => {
                if let (Some(f), DistributionChoice::Kpd { high_risk_fraction }) = (self.high_risk_fraction, &mut cfg.distribution) {
                    *high_risk_fraction = f;
                } else if self.high_risk_fraction.is_some() {
                    bail!("--high-risk-fraction needs --distribution kpd");
                }
            }
        }
        set(&mut cfg.distribution_seed, self.distribution_seed);

        set(&mut cfg.policy, self.policy);
        set(&mut cfg.methods, self.methods.clone());
        set(&mut cfg.budgets, self.budgets.clone());
        if self.per_vertex_cap.is_some() {
            cfg.per_vertex_cap = self.per_vertex_cap;
        }
        if self.ground_set.is_some() {
            cfg.ground_set = self.ground_set.clone();
        }
        set(&mut cfg.exact_cap, self.exact_cap);
        set(&mut cfg.samples, self.samples);
        set(&mut cfg.mcts_lookahead, self.mcts_lookahead);
        if let Some(iterations) = self.mcts_iterations {
            cfg.mcts_budget = SearchBudget::Iterations(iterations);
        }
        if let Some(secs) = self.mcts_seconds {
            if !(secs.is_finite() && secs > 0.0) {
                bail!("--mcts-seconds must be positive");
            }
            cfg.mcts_budget = SearchBudget::WallClock(Duration::from_secs_f64(secs));
        }
        set(&mut cfg.exhaustive_node_cap, self.exhaustive_node_cap);
        set(&mut cfg.realizations, self.realizations);
        set(&mut cfg.master_seed, self.seed);

        cfg.output_dir = Some(
            self.output_dir
                .clone()
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results").join(command)),
        );
        cfg.validate()?;
        Ok(loaded)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// A command parameter recorded in a loaded manifest.
fn parameter(parameters: &serde_json::Value, key: &str) -> Option<serde_json::Value> {
    parameters.get(key).cloned()
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.clone().expect("resolved above")
}

fn report(out: &OutputFiles) {
    println!("wrote {} files to {}", out.files.len(), out.dir.display());
}

fn run_stage(command: &str, args: &RunArgs, multi: bool) -> Result<()> {
    let cfg = args.config.resolve(command)?.config;
    let run = if multi { run_multi_stage(&cfg)? } else { run_single_stage(&cfg)? };
    let out = write_run(&output_dir(&cfg), command, &run, args.timings)?;
    println!("{:<13} {:>5} {:>6} {:>10} {:>10} {:>10} {:>12}", "method", "gamma", "graphs", "delta_p10", "delta_p50", "delta_p90", "oracle_calls");
    for s in run.summary() {
        println!(
            "{:<13} {:>5} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>12}",
            s.method.as_str(),
            s.gamma,
            s.graphs,
            s.p10,
            s.p50,
            s.p90,
            s.oracle_calls
        );
    }
    report(&out);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenGraph(args) => {
            let cfg = args.resolve("gen-graph")?.config;
            let (graphs, filtered) = prepare_graphs(&cfg)?;
            let out = write_graphs(&output_dir(&cfg), &cfg, &graphs, &filtered)?;
            println!("{} graphs kept, {} filtered as trivial", graphs.len(), filtered.len());
            report(&out);
        }
        Command::SingleStage(args) => run_stage("single-stage", &args, false)?,
        Command::MultiStage(args) => run_stage("multi-stage", &args, true)?,
        Command::Bootstrap(args) => {
            let loaded = args.config.resolve("bootstrap")?;
            let sizes = match args.sample_sizes {
                Some(s) => s,
                None => match parameter(&loaded.parameters, "sample_sizes") {
                    Some(v) => serde_json::from_value(v).context("manifest sample_sizes")?,
                    None => vec![10, 100, 1000],
                },
            };
            let replications = match args.replications {
                Some(r) => r,
                None => match parameter(&loaded.parameters, "replications") {
                    Some(v) => serde_json::from_value(v).context("manifest replications")?,
                    None => 200,
                },
            };
            if sizes.is_empty() || sizes.contains(&0) || replications < 2 {
                bail!("bootstrap needs positive sample sizes and at least 2 replications");
            }
            let cfg = loaded.config;
            let run = run_bootstrap(&cfg, &sizes, replications)?;
            let out = write_bootstrap(&output_dir(&cfg), &run)?;
            println!("{:<8} {:>6} {:>6} {:>14}", "budget", "N", "sets", "median_std");
            for s in run.summary() {
                println!("{:<8} {:>6} {:>6} {:>14.5}", s.budget_bin, s.sample_size, s.edge_sets, s.median_normalized_std);
            }
            report(&out);
        }
        Command::OptGap(args) => {
            let cfg = args.resolve("opt-gap")?.config;
            let run = run_opt_gap(&cfg)?;
            let out = write_opt_gap(&output_dir(&cfg), &run)?;
            println!("{:>5} {:>6} {:>8} {:>10} {:>10}", "gamma", "graphs", "matches", "max_%opt", "mean_%opt");
            for s in run.summary() {
                println!("{:>5} {:>6} {:>8} {:>10.4} {:>10.4}", s.gamma, s.graphs, s.matches, s.max_pct_opt, s.mean_pct_opt);
            }
            report(&out);
        }
    }
    Ok(())
}
