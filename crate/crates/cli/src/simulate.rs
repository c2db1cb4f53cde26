use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use qs_core::survey::PoolRef;
use qs_core::SurveyConfig;
use qs_sim::{batch_configs, simulate_batch, AgentPolicy, Dwell};

use crate::{ensure_dir, invalid, read_input};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Survey config, TOML or JSON (by extension).
    #[arg(long)]
    pub survey: PathBuf,
    /// `uniform`, `satisficer`, `deliberator`, or `mixed` to cycle all three.
    #[arg(long, default_value = "mixed")]
    pub policy: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Median pause between actions in milliseconds.
    #[arg(long)]
    pub dwell_median_ms: Option<f64>,
    /// Log-scale spread of the pause.
    #[arg(long)]
    pub dwell_log_sd: Option<f64>,
}

/// Loads a survey config, resolving a pool file relative to the config
/// and inlining it.
pub fn load_survey(path: &Path) -> anyhow::Result<SurveyConfig> {
    let text = read_input(path)?;
    let mut survey: SurveyConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?
    };
    let pool = survey
        .pool
        .resolve(path.parent())
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    survey.validate(&pool).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    survey.pool = PoolRef::Options(pool);
    Ok(survey)
}

pub fn parse_policies(name: &str) -> anyhow::Result<Vec<AgentPolicy>> {
    if name == "mixed" {
        return Ok(AgentPolicy::ALL.to_vec());
    }
    name.parse::<AgentPolicy>()
        .map(|p| vec![p])
        .map_err(|_| invalid(format!("unknown policy `{name}` (uniform, satisficer, deliberator, mixed)")))
}

pub fn run(args: SimulateArgs) -> anyhow::Result<()> {
    let survey = load_survey(&args.survey)?;
    let policies = parse_policies(&args.policy)?;
    let mut dwell = Dwell::default();
    if let Some(m) = args.dwell_median_ms {
        dwell.median_ms = m;
    }
    if let Some(s) = args.dwell_log_sd {
        dwell.log_sd = s;
    }
    let configs = batch_configs(&survey, &policies, args.n, args.seed, dwell);
    let logs = simulate_batch(&configs).map_err(|e| invalid(e.to_string()))?;
    ensure_dir(&args.out)?;
    for log in &logs {
        let path = args.out.join(format!("{}.jsonl", log.header.session_id));
        std::fs::write(&path, log.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut table = String::from("session_id,condition,policy,events\n");
    for (cfg, log) in configs.iter().zip(&logs) {
        table.push_str(&format!(
            "{},{},{},{}\n",
            log.header.session_id,
            log.header.condition.label(),
            cfg.policy.label(),
            log.events.len()
        ));
    }
    crate::print_stdout(&table)?;
    Ok(())
}
