// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use acp_core::{seed, server, Config};
use anyhow::Context;
use clap::Parser;

/// Runs intake, processing, storage, the HTTP API and the websocket monitor.
#[derive(Debug, Parser)]
#[command(name = "acp-server", version)]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Load the built-in reference building and sensor before starting.
    #[arg(long)]
    seed: bool,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let config = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let handle = server::start(config).await.context("starting server")?;
    if args.seed {
        handle.meta.put_crates(seed::crates())?;
        handle.meta.put_sensor(seed::reference_sensor())?;
    }
    println!("http listening on {}", handle.http_addr);
    if let Some(tcp) = handle.tcp_addr() {
        println!("tcp test channel on {tcp}");
    }
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await;
    Ok(())
}
