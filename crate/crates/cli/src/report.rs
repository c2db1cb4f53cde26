//! `qs report`: contrasts between quantities of a finished fit.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{ArgAction, Args};
use qs_bayes::{contrast, Contrast, ContrastOptions, Draws, QuantityDraws, DEFAULT_HDI_MASS};

use crate::{invalid, read_input};

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ReportArgs {
    /// Directory written by `qs fit`.
    #[arg(long)]
    pub draws: PathBuf,
    /// Two quantity names, e.g. `mean[long_text] mean[long_two_phase]`;
    /// repeatable. The contrast is the first minus the second.
    #[arg(long, num_args = 2, value_names = ["A", "B"], action = ArgAction::Append, required = true)]
    pub contrast: Vec<String>,
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"], default_values_t = [-1.0, 1.0])]
    pub rope: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_HDI_MASS)]
    pub hdi_mass: f64,
    /// Seed for resampling when the two sides have different draw counts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report on a fit that failed its convergence check.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub pretty: bool,
}

fn load_draws(path: &Path) -> anyhow::Result<Option<Draws>> {
    if !path.exists() {
        return Ok(None);
    }
    let f = File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Draws::read_csv(f)
        .map(Some)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn lookup(tables: &[&Draws], name: &str) -> anyhow::Result<QuantityDraws> {
    tables
        .iter()
        .find_map(|t| QuantityDraws::from_derived(t, name))
        .ok_or_else(|| {
            let known: Vec<&str> = tables.iter().flat_map(|t| t.names.iter().map(String::as_str)).collect();
            invalid(format!("no quantity `{name}`; available: {}", known.join(", ")))
        })
}

pub const REPORT_COLUMNS: [&str; 17] = [
    "a",
    "b",
    "mean",
    "sd",
    "mode",
    "hdi_mass",
    "hdi_low",
    "hdi_high",
    "p_direction",
    "rope_low",
    "rope_high",
    "rope_fraction",
    "hdi_excludes_zero",
    "hdi_outside_rope",
    "effect_mean",
    "effect_hdi_low",
    "effect_hdi_high",
];

fn row(c: &Contrast) -> Vec<String> {
    let s = &c.summary;
    let f = |x: f64| format!("{x:.6}");
    let e = c.effect_summary.as_ref();
    vec![
        c.a.clone(),
        c.b.clone(),
        f(s.mean),
        f(s.sd),
        f(s.mode),
        f(s.hdi_mass),
        f(s.hdi_low),
        f(s.hdi_high),
        f(s.p_direction),
        f(s.rope_low),
        f(s.rope_high),
        f(s.rope_fraction),
        s.hdi_excludes_zero().to_string(),
        s.hdi_outside_rope().to_string(),
        e.map_or_else(String::new, |e| f(e.mean)),
        e.map_or_else(String::new, |e| f(e.hdi_low)),
        e.map_or_else(String::new, |e| f(e.hdi_high)),
    ]
}

fn pretty(c: &Contrast) -> String {
    let s = &c.summary;
    let mut text = format!(
        "{} - {}: mean {:.3}, mode {:.3}, {:.0}% HDI [{:.3}, {:.3}], P(direction) {:.3}, {:.1}% in ROPE [{}, {}]",
        c.a,
        c.b,
        s.mean,
        s.mode,
        s.hdi_mass * 100.0,
        s.hdi_low,
        s.hdi_high,
        s.p_direction,
        s.rope_fraction * 100.0,
        s.rope_low,
        s.rope_high
    );
    if let Some(e) = &c.effect_summary {
        text.push_str(&format!("; effect size {:.3} [{:.3}, {:.3}]", e.mean, e.hdi_low, e.hdi_high));
    }
    text
}

pub fn run(args: ReportArgs) -> anyhow::Result<()> {
    let meta_path = args.draws.join("fit.json");
    if meta_path.exists() && !args.force {
        let meta: serde_json::Value = serde_json::from_str(&read_input(&meta_path)?)
            .map_err(|e| invalid(format!("{}: {e}", meta_path.display())))?;
        if meta["converged"] == false && meta["forced"] != true {
            return Err(invalid(format!(
                "{} did not converge; pass --force to report anyway",
                args.draws.display()
            )));
        }
    }
    let quantities = load_draws(&args.draws.join("quantities.csv"))?;
    let params = load_draws(&args.draws.join("draws.csv"))?;
    let tables: Vec<&Draws> = quantities.iter().chain(params.iter()).collect();
    if tables.is_empty() {
        return Err(invalid(format!("{} holds no draws.csv or quantities.csv", args.draws.display())));
    }
    let opts = ContrastOptions { mass: args.hdi_mass, rope: (args.rope[0], args.rope[1]), seed: args.seed };
    let mut contrasts = Vec::new();
    for pair in args.contrast.chunks(2) {
        let a = lookup(&tables, &pair[0])?;
        let b = lookup(&tables, &pair[1])?;
        contrasts.push(contrast(&a, &b, &opts).map_err(|e| invalid(e.to_string()))?);
    }
    if args.pretty {
        let text: String = contrasts.iter().map(|c| pretty(c) + "\n").collect();
        return crate::print_stdout(&text);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS)?;
    for c in &contrasts {
        w.write_record(row(c))?;
    }
    let buf = w.into_inner().context("writing report")?;
    crate::print_stdout(&String::from_utf8(buf)?)
}
