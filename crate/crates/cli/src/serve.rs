use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use qs_service::ServiceConfig;

use crate::invalid;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config (TOML). Without it the defaults apply.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
}

pub fn run(args: ServeArgs) -> anyhow::Result<()> {
    let cfg = match &args.config {
        Some(path) => ServiceConfig::load(path).map_err(|e| invalid(e.to_string()))?,
        None => ServiceConfig::default(),
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .with_context(|| format!("binding {}", args.listen))?;
        tracing::info!(addr = %listener.local_addr()?, data_dir = %cfg.resolve_data_dir().display(), "listening");
        qs_service::serve(&cfg, listener).await.context("service stopped")
    })
}
