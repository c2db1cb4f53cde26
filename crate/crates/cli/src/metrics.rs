use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use qs_core::events::ParseMode;
use qs_core::metrics::{session_metrics, write_actions_csv, write_metrics_csv, SessionMetrics};
use qs_core::SessionLog;

use crate::{invalid, read_input};

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Directory of `*.jsonl` session logs.
    #[arg(long)]
    pub events: PathBuf,
    /// Per-option table: one row per option, then one totals row per session.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-adjustment table.
    #[arg(long)]
    pub actions: Option<PathBuf>,
}

/// Session logs under `dir`, in file-name order.
pub fn read_logs(dir: &Path) -> anyhow::Result<Vec<SessionLog>> {
    let entries = std::fs::read_dir(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = read_input(p)?;
            SessionLog::parse(&text, ParseMode::Strict).map_err(|e| invalid(format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn compute(logs: &[SessionLog]) -> anyhow::Result<Vec<SessionMetrics>> {
    logs.iter()
        .map(|log| {
            session_metrics(log).map_err(|e| invalid(format!("session {}: {e}", log.header.session_id)))
        })
        .collect()
}

pub fn run(args: MetricsArgs) -> anyhow::Result<()> {
    let logs = read_logs(&args.events)?;
    if logs.is_empty() {
        return Err(invalid(format!("no .jsonl session logs in {}", args.events.display())));
    }
    let sessions = compute(&logs)?;
    let create = |p: &Path| File::create(p).map(BufWriter::new).with_context(|| format!("creating {}", p.display()));
    write_metrics_csv(&sessions, create(&args.out)?).context("writing metrics")?;
    if let Some(path) = &args.actions {
        write_actions_csv(&sessions, create(path)?).context("writing actions")?;
    }
    Ok(())
}
