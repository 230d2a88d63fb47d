use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use edgequery_service::{router, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "edgequery-service", version, about = "Session service for live edge querying")]
struct Args {
    #[arg(long, env = "EDGEQUERY_ADDR", default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Session logs and uploaded graphs; sessions are kept in memory only
    /// when omitted.
    #[arg(long, env = "EDGEQUERY_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Tree-search iterations allowed per recommendation.
    #[arg(long, default_value_t = 500)]
    mcts_iteration_cap: u64,
    /// Require `Authorization: Bearer <token>` on every request.
    #[arg(long, env = "EDGEQUERY_TOKEN")]
    token: Option<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let state = AppState::new(ServiceConfig {
        data_dir: args.data_dir,
        mcts_iteration_cap: args.mcts_iteration_cap,
        token: args.token,
    })
    .context("loading sessions")?;
    let listener = tokio::net::TcpListener::bind(args.addr).await.with_context(|| format!("binding {}", args.addr))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
