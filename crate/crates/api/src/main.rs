use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use ecg_api::{Platform, PlatformConfig};
use ecg_pipeline::Shutdown;
use tracing_subscriber::EnvFilter;

/// ECG platform daemon: HTTP API plus the polling pipeline.
#[derive(Parser)]
#[command(name = "ecgd", version)]
struct Args {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `api.listen`.
    #[arg(long)]
    listen: Option<String>,
    /// Serve the API without running the poller.
    #[arg(long)]
    no_pipeline: bool,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into())).init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(p) => PlatformConfig::load(p)?,
        None => {
            let mut c = PlatformConfig::default();
            c.resolve_paths(&std::env::current_dir()?);
            c
        }
    };
    if let Some(l) = args.listen {
        config.api.listen = l;
    }
    let listen = config.api.listen.clone();
    let platform = Platform::build(config).context("building platform")?;
    let shutdown = Shutdown::new();
    let poller = (!args.no_pipeline).then(|| platform.spawn_pipeline(shutdown.clone()));

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&listen).await.with_context(|| format!("binding {listen}"))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, platform.router())
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    shutdown.request();
    if let Some(h) = poller {
        let _ = h.join();
    }
    Ok(())
}
