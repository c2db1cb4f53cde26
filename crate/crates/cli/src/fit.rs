//! `qs fit`: sample a model and write its draws directory.
//!
//! ```text
//! <out>/draws.csv       chain,iter,<parameters>
//! <out>/quantities.csv  chain,iter,<derived quantities>
//! <out>/summary.csv     name,kind,mean,sd,mode,hdi_low,hdi_high,r_hat
//! <out>/fit.json        settings, data shape, convergence
//! ```
//!
//! Only `draws.csv` and `fit.json` are written when the largest split-R̂
//! exceeds [`MAX_RHAT`] and `--force` is absent.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use qs_bayes::models::{CumDistModel, DistExpModel, MeanVarModel, TimeGammaModel, TlxModel};
use qs_bayes::{max_rhat, sample, summarize_draws, Draws, Model, ParamSummary, SamplerConfig, DEFAULT_HDI_MASS};
use serde::Serialize;

use crate::data::{load_fit_data, DataOptions, FitData, ModelKind};
use crate::{ensure_dir, invalid, read_input};

pub const MAX_RHAT: f64 = 1.05;

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// Kept iterations per chain.
    #[arg(long, default_value_t = 20_000)]
    pub iters: usize,
    /// Adaptation iterations per chain.
    #[arg(long, default_value_t = 5_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Chains sampled concurrently; defaults to `--chains`.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Summarize even when chains have not converged.
    #[arg(long)]
    pub force: bool,
    /// Human-readable summary on stdout instead of CSV.
    #[arg(long)]
    pub pretty: bool,
    /// Column holding the outcome; for `tlx`, `weighted`, `level` or a
    /// subscale name.
    #[arg(long)]
    pub value: Option<String>,
    /// Minimum responses per TLX category.
    #[arg(long, default_value_t = 10)]
    pub min_bin: usize,
    #[arg(long, default_value_t = DEFAULT_HDI_MASS)]
    pub hdi_mass: f64,
    /// Shape of the LKJ prior on interaction correlations.
    #[arg(long)]
    pub lkj_shape: Option<f64>,
}

pub fn build_model(kind: ModelKind, data: &FitData, lkj_shape: Option<f64>) -> anyhow::Result<Box<dyn Model>> {
    let bad = |e: qs_bayes::ModelError| invalid(e.to_string());
    Ok(match (kind, data) {
        (ModelKind::Tlx, FitData::Tlx { obs, bins }) => {
            let m = TlxModel::new(obs, bins.len()).map_err(bad)?;
            Box::new(match lkj_shape {
                Some(s) => m.with_lkj_shape(s),
                None => m,
            })
        }
        (ModelKind::DistExp, FitData::Dist { obs, users, .. }) => {
            let m = DistExpModel::new(obs, users.len()).map_err(bad)?;
            Box::new(match lkj_shape {
                Some(s) => m.with_lkj_shape(s),
                None => m,
            })
        }
        (ModelKind::DistMeanvar, FitData::Dist { obs, users, .. }) => {
            let m = MeanVarModel::new(obs, users.len()).map_err(bad)?;
            Box::new(match lkj_shape {
                Some(s) => m.with_lkj_shape(s),
                None => m,
            })
        }
        (ModelKind::Cumdist, FitData::CumDist { obs, users }) => Box::new(CumDistModel::new(obs, users.len()).map_err(bad)?),
        (ModelKind::TimeGamma, FitData::Time { groups, .. }) => Box::new(TimeGammaModel::new(groups).map_err(bad)?),
        _ => unreachable!("data loaded for a different model"),
    })
}

#[derive(Debug, Serialize)]
struct FitRecord<'a> {
    model: ModelKind,
    data: String,
    rows: usize,
    sampler: &'a SamplerConfig,
    hdi_mass: f64,
    max_rhat: Option<f64>,
    converged: bool,
    forced: bool,
    mean_acceptance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<&'a [qs_core::metrics::Bin]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    users: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    excluded_users: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dropped_nonpositive: Option<usize>,
}

pub struct FitOutput {
    pub draws: Draws,
    pub quantities: Draws,
    pub params: Vec<ParamSummary>,
    pub derived: Vec<ParamSummary>,
    pub max_rhat: Option<f64>,
}

/// Samples `model` with at most `jobs` chains running at once.
pub fn fit(model: &dyn Model, cfg: &SamplerConfig, jobs: usize, mass: f64) -> anyhow::Result<FitOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building thread pool")?;
    let draws = pool
        .install(|| sample(model, cfg))
        .map_err(|e| invalid(format!("sampler: {e}")))?;
    let quantities = draws.derive(model);
    // Too few draws to summarize is a settings problem, not an internal one.
    let summarize = |d: &Draws| summarize_draws(d, mass).map_err(|e| invalid(format!("summarizing draws: {e}; raise --iters")));
    let params = summarize(&draws)?;
    let derived = if quantities.dim() > 0 { summarize(&quantities)? } else { Vec::new() };
    let rhat = max_rhat(&draws);
    Ok(FitOutput { draws, quantities, params, derived, max_rhat: rhat })
}

fn write_draws(path: &Path, draws: &Draws) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    draws.write_csv(BufWriter::new(f)).with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn write_summary<W: Write>(out: W, params: &[ParamSummary], derived: &[ParamSummary]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "kind", "mean", "sd", "mode", "hdi_low", "hdi_high", "r_hat"])?;
    for (kind, rows) in [("param", params), ("derived", derived)] {
        for s in rows {
            w.write_record([
                s.name.as_str(),
                kind,
                &format!("{:.6}", s.mean),
                &format!("{:.6}", s.sd),
                &format!("{:.6}", s.mode),
                &format!("{:.6}", s.hdi_low),
                &format!("{:.6}", s.hdi_high),
                &fmt_opt(s.rhat),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn pretty(kind: ModelKind, out: &FitOutput, mass: f64) -> String {
    use std::fmt::Write as _;
    let mut t = String::new();
    let _ = writeln!(
        t,"{kind:?} fit: {} chains x {} draws, max split-R-hat {}", out.draws.n_chains(), out.draws.n_iter(), fmt_opt(out.max_rhat));
    let _ = writeln!(t, "{:<32} {:>11} {:>10} {:>11} {:>11} {:>7}", "name", "mean", "sd", "hdi_low", "hdi_high", "r_hat");
    let _ = writeln!(t, "{:<32} {:>11} {:>10} {:>23} {:>7}", "", "", "", format!("({:.0}% HDI)", mass * 100.0), "");
    for s in out.params.iter().chain(&out.derived) {
        let _ = writeln!(
            t,
            "{:<32} {:>11.4} {:>10.4} {:>11.4} {:>11.4} {:>7}",
            s.name,
            s.mean,
            s.sd,
            s.hdi_low,
            s.hdi_high,
            s.rhat.map_or("-".into(), |r| format!("{r:.3}"))
        );
    }
    t
}

pub fn run(args: FitArgs) -> anyhow::Result<()> {
    if args.chains == 0 || args.iters == 0 {
        return Err(invalid("--chains and --iters must be positive"));
    }
    if !(args.hdi_mass > 0.0 && args.hdi_mass < 1.0) {
        return Err(invalid("--hdi-mass must lie in (0, 1)"));
    }
    let text = read_input(&args.data)?;
    let opts = DataOptions { value_column: args.value.clone(), min_bin: args.min_bin };
    let data = load_fit_data(args.model, &text, &opts).map_err(|e| invalid(format!("{}: {e}", args.data.display())))?;
    match &data {
        FitData::Dist { excluded, .. } if !excluded.is_empty() => eprintln!(
            "qs: note: excluded {} user(s) whose distances are all zero: {}",
            excluded.len(),
            excluded.join(" ")
        ),
        FitData::Time { dropped, .. } if *dropped > 0 => {
            eprintln!("qs: note: dropped {dropped} row(s) with non-positive time")
        }
        _ => {}
    }
    let model = build_model(args.model, &data, args.lkj_shape)?;
    let cfg = SamplerConfig {
        chains: args.chains,
        burn_in: args.burn_in,
        iterations: args.iters,
        seed: args.seed,
        ..SamplerConfig::default()
    };
    let out = fit(model.as_ref(), &cfg, args.jobs.unwrap_or(args.chains), args.hdi_mass)?;
    ensure_dir(&args.out)?;
    write_draws(&args.out.join("draws.csv"), &out.draws)?;

    let converged = out.max_rhat.is_some_and(|r| r <= MAX_RHAT);
    let (bins, users, excluded, dropped) = match &data {
        FitData::Tlx { bins, .. } => (Some(bins.as_slice()), None, None, None),
        FitData::Dist { users, excluded, .. } => (None, Some(users.as_slice()), Some(excluded.as_slice()), None),
        FitData::CumDist { users, .. } => (None, Some(users.as_slice()), None, None),
        FitData::Time { dropped, .. } => (None, None, None, Some(*dropped)),
    };
    let record = FitRecord {
        model: args.model,
        data: args.data.display().to_string(),
        rows: data.rows(),
        sampler: &cfg,
        hdi_mass: args.hdi_mass,
        max_rhat: out.max_rhat,
        converged,
        forced: args.force && !converged,
        mean_acceptance: out.draws.mean_acceptance(),
        bins,
        users,
        excluded_users: excluded,
        dropped_nonpositive: dropped,
    };
    let json = serde_json::to_string_pretty(&record)?;
    std::fs::write(args.out.join("fit.json"), json + "\n").context("writing fit.json")?;

    if !converged && !args.force {
        return Err(invalid(format!(
            "chains did not converge (max split-R-hat {} > {MAX_RHAT}); draws written to {}, rerun with more --iters or pass --force",
            fmt_opt(out.max_rhat),
            args.out.display()
        )));
    }
    write_draws(&args.out.join("quantities.csv"), &out.quantities)?;
    let path = args.out.join("summary.csv");
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_summary(BufWriter::new(f), &out.params, &out.derived)?;
    if args.pretty {
        crate::print_stdout(&pretty(args.model, &out, args.hdi_mass))
    } else {
        let mut buf = Vec::new();
        write_summary(&mut buf, &out.params, &out.derived)?;
        crate::print_stdout(&String::from_utf8(buf)?)
    }
}
