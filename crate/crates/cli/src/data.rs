//! CSV inputs for `qs fit`.
//!
//! Every model reads a header row and looks columns up by name, so the
//! per-option and per-action tables written by `qs metrics` can be fed in
//! directly. A cell is given either as `condition` (e.g. `long_two_phase`)
//! or as separate `length` (`short`/`long` or 0/1) and `interface`
//! (`text`/`two_phase` or 0/1) columns. Totals rows (`option_id` = `*`)
//! and rows with an empty value are skipped.
//!
//! | model          | value column (default) | also reads              |
//! |----------------|------------------------|-------------------------|
//! | `dist-exp`     | `dist_per_option`      | `session_id` or `user`  |
//! | `dist-meanvar` | `distance`             | `session_id` or `user`  |
//! | `cumdist`      | `cumulative`           | user, `step`            |
//! | `time-gamma`   | `time_s`               | optional `group`        |
//! | `tlx`          | see below              |                         |
//!
//! TLX rows carry the six ratings (`mental` .. `frustration`, 0–20) and one
//! column per comparison named `<a>_<b>` (scale order, e.g.
//! `mental_physical`) holding the winning dimension. The outcome is the
//! weighted score, its level, or one subscale, grouped into ordinal
//! categories by minimum-frequency binning.

use std::collections::HashMap;
use std::str::FromStr;

use clap::ValueEnum;
use csv::StringRecord;
use qs_bayes::models::{CumDistObs, DistObs, TimeGroup, TlxObs};
use qs_core::metrics::{bin_of, min_freq_bin, tlx_level, Bin, LevelTable, PairwiseChoice, TlxDimension, TlxResponse};
use qs_core::Condition;
use serde::Serialize;

use crate::invalid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Tlx,
    DistExp,
    DistMeanvar,
    Cumdist,
    TimeGamma,
}

impl ModelKind {
    pub fn default_value_column(self) -> &'static str {
        match self {
            ModelKind::Tlx => "weighted",
            ModelKind::DistExp => "dist_per_option",
            ModelKind::DistMeanvar => "distance",
            ModelKind::Cumdist => "cumulative",
            ModelKind::TimeGamma => "time_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitData {
    Tlx { obs: Vec<TlxObs>, bins: Vec<Bin> },
    /// `excluded` lists users dropped before fitting (see [`drop_all_zero_users`]).
    Dist { obs: Vec<DistObs>, users: Vec<String>, excluded: Vec<String> },
    CumDist { obs: Vec<CumDistObs>, users: Vec<String> },
    Time { groups: Vec<TimeGroup>, dropped: usize },
}

impl FitData {
    pub fn rows(&self) -> usize {
        match self {
            FitData::Tlx { obs, .. } => obs.len(),
            FitData::Dist { obs, .. } => obs.len(),
            FitData::CumDist { obs, .. } => obs.len(),
            FitData::Time { groups, .. } => groups.iter().map(|g| g.times.len()).sum(),
        }
    }
}

struct Table {
    header: StringRecord,
    rows: Vec<StringRecord>,
}

impl Table {
    fn parse(text: &str) -> anyhow::Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| invalid(format!("csv header: {e}")))?.clone();
        let rows = r
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid(format!("csv: {e}")))?;
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h.trim() == name)
    }

    fn require(&self, name: &str) -> anyhow::Result<usize> {
        self.col(name).ok_or_else(|| invalid(format!("missing column `{name}`")))
    }

    /// Rows that are not totals rows, with their 1-based line numbers.
    fn data_rows(&self) -> impl Iterator<Item = (usize, &StringRecord)> {
        let total = self.col("option_id");
        self.rows
            .iter()
            .enumerate()
            .filter(move |(_, r)| total.is_none_or(|c| r.get(c).map(str::trim) != Some("*")))
            .map(|(i, r)| (i + 2, r))
    }
}

fn field<'a>(row: &'a StringRecord, col: usize, line: usize) -> anyhow::Result<&'a str> {
    row.get(col)
        .map(str::trim)
        .ok_or_else(|| invalid(format!("line {line}: too few fields")))
}

fn number<T: FromStr>(row: &StringRecord, col: usize, line: usize, what: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    let s = field(row, col, line)?;
    s.parse().map_err(|e| invalid(format!("line {line}: {what} `{s}`: {e}")))
}

enum CellCols {
    Condition(usize),
    Split(usize, usize),
}

impl CellCols {
    fn find(t: &Table) -> anyhow::Result<Self> {
        if let Some(c) = t.col("condition") {
            return Ok(CellCols::Condition(c));
        }
        match (t.col("length"), t.col("interface")) {
            (Some(l), Some(i)) => Ok(CellCols::Split(l, i)),
            _ => Err(invalid("need a `condition` column or both `length` and `interface`")),
        }
    }

    fn get(&self, row: &StringRecord, line: usize) -> anyhow::Result<(usize, usize)> {
        match *self {
            CellCols::Condition(c) => {
                let s = field(row, c, line)?;
                let cond = Condition::from_str(s).map_err(|e| invalid(format!("line {line}: {e}")))?;
                Ok((cond.length_code(), cond.interface_code()))
            }
            CellCols::Split(l, i) => {
                let code = |col: usize, names: [&str; 2], what: &str| -> anyhow::Result<usize> {
                    let s = field(row, col, line)?;
                    match s {
                        _ if s == names[0] || s == "0" => Ok(0),
                        _ if s == names[1] || s == "1" => Ok(1),
                        _ => Err(invalid(format!("line {line}: {what} `{s}` is not {} or {}", names[0], names[1]))),
                    }
                };
                Ok((code(l, ["short", "long"], "length")?, code(i, ["text", "two_phase"], "interface")?))
            }
        }
    }
}

/// Maps user labels to dense indices in order of first appearance.
#[derive(Default)]
struct Users {
    index: HashMap<String, usize>,
    labels: Vec<String>,
}

impl Users {
    fn id(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), self.labels.len() - 1);
        self.labels.len() - 1
    }
}

fn user_col(t: &Table) -> anyhow::Result<usize> {
    t.col("user")
        .or_else(|| t.col("session_id"))
        .ok_or_else(|| invalid("need a `user` or `session_id` column"))
}

#[derive(Debug, Clone)]
pub struct DataOptions {
    pub value_column: Option<String>,
    /// Minimum observations per TLX ordinal category.
    pub min_bin: usize,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions { value_column: None, min_bin: 10 }
    }
}

pub fn load_fit_data(kind: ModelKind, text: &str, opts: &DataOptions) -> anyhow::Result<FitData> {
    let t = Table::parse(text)?;
    let value_name = opts.value_column.as_deref().unwrap_or(kind.default_value_column());
    match kind {
        ModelKind::Tlx => load_tlx(&t, value_name, opts.min_bin),
        ModelKind::DistExp | ModelKind::DistMeanvar => {
            let (cell, user, value) = (CellCols::find(&t)?, user_col(&t)?, t.require(value_name)?);
            let mut users = Users::default();
            let mut obs = Vec::new();
            for (line, row) in t.data_rows() {
                if field(row, value, line)?.is_empty() {
                    continue;
                }
                let (length, interface) = cell.get(row, line)?;
                let d: f64 = number(row, value, line, value_name)?;
                obs.push(DistObs { d, length, interface, user: users.id(field(row, user, line)?) });
            }
            if kind == ModelKind::DistExp {
                let (obs, users, excluded) = drop_all_zero_users(obs, users.labels);
                return Ok(FitData::Dist { obs, users, excluded });
            }
            Ok(FitData::Dist { obs, users: users.labels, excluded: Vec::new() })
        }
        ModelKind::Cumdist => {
            let (cell, user, value, step) = (CellCols::find(&t)?, user_col(&t)?, t.require(value_name)?, t.require("step")?);
            let mut users = Users::default();
            let mut obs = Vec::new();
            for (line, row) in t.data_rows() {
                if field(row, value, line)?.is_empty() {
                    continue;
                }
                let (_, version) = cell.get(row, line)?;
                obs.push(CumDistObs {
                    d: number(row, value, line, value_name)?,
                    version,
                    step: number(row, step, line, "step")?,
                    user: users.id(field(row, user, line)?),
                });
            }
            Ok(FitData::CumDist { obs, users: users.labels })
        }
        ModelKind::TimeGamma => {
            let value = t.require(value_name)?;
            let group = t.col("group");
            let cell = if group.is_none() { Some(CellCols::find(&t)?) } else { None };
            let mut groups: Vec<TimeGroup> = Vec::new();
            let mut dropped = 0;
            for (line, row) in t.data_rows() {
                if field(row, value, line)?.is_empty() {
                    continue;
                }
                let label = match (group, &cell) {
                    (Some(g), _) => field(row, g, line)?.to_string(),
                    (None, Some(c)) => {
                        let (l, i) = c.get(row, line)?;
                        qs_bayes::models::cell_label(l, i)
                    }
                    (None, None) => unreachable!(),
                };
                let x: f64 = number(row, value, line, value_name)?;
                // The Gamma likelihood has no mass at zero; an option never
                // adjusted has no time attributed to it.
                if x <= 0.0 {
                    dropped += 1;
                    continue;
                }
                match groups.iter_mut().find(|g| g.label == label) {
                    Some(g) => g.times.push(x),
                    None => groups.push(TimeGroup { label, times: vec![x] }),
                }
            }
            Ok(FitData::Time { groups, dropped })
        }
    }
}

/// Removes users whose every distance is zero. Under the exponential
/// likelihood such a user pulls their effect toward −∞ and, with the
/// user-scale prior, the posterior is improper; no sampler can converge.
pub fn drop_all_zero_users(obs: Vec<DistObs>, users: Vec<String>) -> (Vec<DistObs>, Vec<String>, Vec<String>) {
    let mut positive = vec![false; users.len()];
    for o in &obs {
        positive[o.user] |= o.d > 0.0;
    }
    let mut remap = vec![usize::MAX; users.len()];
    let (mut kept, mut excluded) = (Vec::new(), Vec::new());
    for (u, label) in users.into_iter().enumerate() {
        if positive[u] {
            remap[u] = kept.len();
            kept.push(label);
        } else {
            excluded.push(label);
        }
    }
    let obs = obs
        .into_iter()
        .filter(|o| positive[o.user])
        .map(|o| DistObs { user: remap[o.user], ..o })
        .collect();
    (obs, kept, excluded)
}

/// Outcomes a TLX fit can model.
fn tlx_category(outcome: &str, r: &TlxResponse) -> anyhow::Result<(usize, usize)> {
    match outcome {
        // Sum of weight × rating: the weighted score times three, exact.
        "weighted" => {
            let w = r.weights().map_err(|e| invalid(e.to_string()))?;
            Ok(((0..6).map(|d| w[d] as usize * r.ratings[d] as usize).sum(), 301))
        }
        "level" => {
            let score = qs_core::metrics::tlx_weighted_score(r).map_err(|e| invalid(e.to_string()))?;
            Ok((tlx_level(score, &LevelTable::default()).index(), 5))
        }
        name => match TlxDimension::parse(name) {
            Some(d) => Ok((r.ratings[d.index()] as usize, 21)),
            None => Err(invalid(format!(
                "unknown TLX outcome `{name}` (weighted, level, or a subscale name)"
            ))),
        },
    }
}

fn tlx_response(t: &Table, row: &StringRecord, line: usize, pairs: bool) -> anyhow::Result<TlxResponse> {
    let mut ratings = [0u8; 6];
    for d in TlxDimension::ALL {
        let col = t.require(d.name())?;
        ratings[d.index()] = number(row, col, line, d.name())?;
    }
    let mut comparisons = Vec::with_capacity(15);
    if pairs {
        for (a, b) in TlxDimension::pairs() {
            let name = format!("{}_{}", a.name(), b.name());
            let s = field(row, t.require(&name)?, line)?;
            let winner = TlxDimension::parse(s)
                .ok_or_else(|| invalid(format!("line {line}: `{name}` winner `{s}` is not a dimension")))?;
            comparisons.push(PairwiseChoice { a, b, winner });
        }
    }
    Ok(TlxResponse { ratings, comparisons })
}

fn load_tlx(t: &Table, outcome: &str, min_bin: usize) -> anyhow::Result<FitData> {
    let cell = CellCols::find(t)?;
    let needs_pairs = matches!(outcome, "weighted" | "level");
    let mut raw = Vec::new();
    let mut scale = 0;
    for (line, row) in t.data_rows() {
        let r = tlx_response(t, row, line, needs_pairs)?;
        if !needs_pairs {
            for d in TlxDimension::ALL {
                if r.ratings[d.index()] > 20 {
                    return Err(invalid(format!("line {line}: {} rating above 20", d.name())));
                }
            }
        }
        let (category, k) = tlx_category(outcome, &r).map_err(|e| invalid(format!("line {line}: {e}")))?;
        scale = k;
        let (length, interface) = cell.get(row, line)?;
        raw.push((category, length, interface));
    }
    let mut counts = vec![0usize; scale];
    for &(c, ..) in &raw {
        counts[c] += 1;
    }
    let bins = min_freq_bin(&counts, min_bin);
    if bins.len() < 2 {
        return Err(invalid(format!(
            "{} responses form fewer than two categories of at least {min_bin}",
            raw.len()
        )));
    }
    let obs = raw
        .into_iter()
        .map(|(c, length, interface)| TlxObs { y: bin_of(&bins, c).expect("category within scale"), length, interface })
        .collect();
    Ok(FitData::Tlx { obs, bins })
}
