//! Behavioral measures computed from session logs.
//!
//! Edit distance is measured in display positions: consecutive vote
//! adjustments at positions `p_{t-1}` and `p_t` are `p_t - p_{t-1}` apart,
//! with both positions read from the layout as it stands when adjustment `t`
//! happens. The first adjustment of a session has no predecessor and
//! contributes no distance.
//!
//! Time per option is approximated from click timing alone: each gap between
//! consecutive events is charged to the option the later event acts on, and
//! gaps ending in an event with no option (phase navigation, sort, submit)
//! are left unattributed.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{replay, EventKind, ReplayError, SessionLog, SessionState};
use crate::mechanism::{Credits, OptionId, VoteCount};
use crate::survey::Condition;

/// One vote adjustment with the display position of its target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracedAction {
    pub seq: u64,
    pub ts_ms: u64,
    pub option: OptionId,
    pub position: usize,
    pub old: VoteCount,
    pub new: VoteCount,
    pub remaining_after: Credits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTrace {
    /// All options of the session.
    pub options: Vec<OptionId>,
    pub actions: Vec<TracedAction>,
}

/// Replays `log`, recording every `VoteSet` with its display position.
pub fn action_trace(log: &SessionLog) -> Result<ActionTrace, ReplayError> {
    let mut state = SessionState::initial(&log.header);
    let mut actions = Vec::new();
    for (index, event) in log.events.iter().enumerate() {
        if let EventKind::VoteSet { option, old, new, remaining_after } = &event.kind {
            let position = state
                .display_position(option)
                .ok_or_else(|| ReplayError {
                    index,
                    error: crate::events::IllegalEvent::UnknownOption { option: option.clone() },
                })?;
            actions.push(TracedAction {
                seq: event.seq,
                ts_ms: event.ts_ms,
                option: option.clone(),
                position,
                old: *old,
                new: *new,
                remaining_after: *remaining_after,
            });
        }
        state.apply(event).map_err(|error| ReplayError { index, error })?;
    }
    Ok(ActionTrace { options: log.header.options.clone(), actions })
}

/// Signed position change between consecutive adjustments.
pub fn edit_distance_per_action(trace: &ActionTrace) -> Vec<i64> {
    trace
        .actions
        .windows(2)
        .map(|w| w[1].position as i64 - w[0].position as i64)
        .collect()
}

/// Total absolute distance charged to each option, attributing each step's
/// distance to the option being modified at that step.
pub fn edit_distance_per_option(trace: &ActionTrace) -> BTreeMap<OptionId, u64> {
    let mut out: BTreeMap<OptionId, u64> = trace.options.iter().map(|o| (o.clone(), 0)).collect();
    for w in trace.actions.windows(2) {
        let d = w[1].position.abs_diff(w[0].position) as u64;
        *out.entry(w[1].option.clone()).or_insert(0) += d;
    }
    out
}

/// Running sum of absolute per-action distances.
pub fn cumulative_from_distances(distances: &[i64]) -> Vec<u64> {
    distances
        .iter()
        .scan(0u64, |acc, d| {
            *acc += d.unsigned_abs();
            Some(*acc)
        })
        .collect()
}

pub fn cumulative_edit_distance(trace: &ActionTrace) -> Vec<u64> {
    cumulative_from_distances(&edit_distance_per_action(trace))
}

/// Timestamps used for timing analysis: client clocks, unless they ever run
/// backwards and every event carries a server receipt time.
pub fn effective_timestamps(log: &SessionLog) -> Vec<u64> {
    let client: Vec<u64> = log.events.iter().map(|e| e.ts_ms).collect();
    let monotone = client.windows(2).all(|w| w[0] <= w[1]);
    if monotone {
        return client;
    }
    let received: Option<Vec<u64>> = log.events.iter().map(|e| e.received_ms).collect();
    received.unwrap_or(client)
}

/// Milliseconds attributed to each option of the session.
pub fn time_per_option_ms(log: &SessionLog) -> BTreeMap<OptionId, u64> {
    let ts = effective_timestamps(log);
    let mut out: BTreeMap<OptionId, u64> = log.header.options.iter().map(|o| (o.clone(), 0)).collect();
    for (i, event) in log.events.iter().enumerate().skip(1) {
        if let Some(option) = event.kind.target() {
            let gap = ts[i].saturating_sub(ts[i - 1]);
            *out.entry(option.clone()).or_insert(0) += gap;
        }
    }
    out
}

/// Seconds attributed to each option.
pub fn time_per_option(log: &SessionLog) -> BTreeMap<OptionId, f64> {
    time_per_option_ms(log)
        .into_iter()
        .map(|(o, ms)| (o, ms as f64 / 1000.0))
        .collect()
}

/// First-to-last event span in milliseconds.
pub fn session_duration_ms(log: &SessionLog) -> u64 {
    let ts = effective_timestamps(log);
    match (ts.first(), ts.last()) {
        (Some(a), Some(b)) => b.saturating_sub(*a),
        _ => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentSize {
    Small,
    Large,
}

/// Small when at most two votes are added or removed.
pub fn classify_adjustment(old: VoteCount, new: VoteCount) -> AdjustmentSize {
    if old.0.abs_diff(new.0) <= 2 {
        AdjustmentSize::Small
    } else {
        AdjustmentSize::Large
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainingPoint {
    pub pct_remaining: f64,
    pub size: AdjustmentSize,
}

/// Percentage of the budget left after each adjustment.
pub fn remaining_credit_series(trace: &ActionTrace, budget: Credits) -> Vec<RemainingPoint> {
    trace
        .actions
        .iter()
        .map(|a| RemainingPoint {
            pct_remaining: if budget.0 == 0 {
                0.0
            } else {
                100.0 * a.remaining_after.0 as f64 / budget.0 as f64
            },
            size: classify_adjustment(a.old, a.new),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// NASA-TLX
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TlxDimension {
    Mental,
    Physical,
    Temporal,
    Performance,
    Effort,
    Frustration,
}

impl TlxDimension {
    pub const ALL: [TlxDimension; 6] = [
        TlxDimension::Mental,
        TlxDimension::Physical,
        TlxDimension::Temporal,
        TlxDimension::Performance,
        TlxDimension::Effort,
        TlxDimension::Frustration,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["mental", "physical", "temporal", "performance", "effort", "frustration"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    /// The fifteen unordered pairs, lower index first.
    pub fn pairs() -> Vec<(TlxDimension, TlxDimension)> {
        let mut out = Vec::with_capacity(15);
        for i in 0..6 {
            for j in i + 1..6 {
                out.push((Self::ALL[i], Self::ALL[j]));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseChoice {
    pub a: TlxDimension,
    pub b: TlxDimension,
    pub winner: TlxDimension,
}

/// Six 0–20 subscale ratings plus the fifteen importance comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlxResponse {
    /// Indexed by [`TlxDimension::index`].
    pub ratings: [u8; 6],
    pub comparisons: Vec<PairwiseChoice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TlxError {
    #[error("rating {rating} for {dimension:?} is outside 0..=20")]
    RatingOutOfRange { dimension: TlxDimension, rating: u8 },
    #[error("expected 15 pairwise comparisons, got {0}")]
    ComparisonCount(usize),
    #[error("comparison {a:?} vs {b:?} is not a valid pair")]
    InvalidPair { a: TlxDimension, b: TlxDimension },
    #[error("pair {a:?} vs {b:?} compared more than once")]
    RepeatedPair { a: TlxDimension, b: TlxDimension },
    #[error("winner {winner:?} is not part of {a:?} vs {b:?}")]
    WinnerNotInPair { a: TlxDimension, b: TlxDimension, winner: TlxDimension },
}

impl TlxResponse {
    pub fn validate(&self) -> Result<(), TlxError> {
        for d in TlxDimension::ALL {
            let rating = self.ratings[d.index()];
            if rating > 20 {
                return Err(TlxError::RatingOutOfRange { dimension: d, rating });
            }
        }
        if self.comparisons.len() != 15 {
            return Err(TlxError::ComparisonCount(self.comparisons.len()));
        }
        let mut seen = [[false; 6]; 6];
        for c in &self.comparisons {
            let (a, b) = (c.a, c.b);
            if a == b {
                return Err(TlxError::InvalidPair { a, b });
            }
            let (lo, hi) = (a.index().min(b.index()), a.index().max(b.index()));
            if seen[lo][hi] {
                return Err(TlxError::RepeatedPair { a, b });
            }
            seen[lo][hi] = true;
            if c.winner != a && c.winner != b {
                return Err(TlxError::WinnerNotInPair { a, b, winner: c.winner });
            }
        }
        Ok(())
    }

    /// Times each dimension won a comparison; sums to 15.
    pub fn weights(&self) -> Result<[u32; 6], TlxError> {
        self.validate()?;
        let mut w = [0u32; 6];
        for c in &self.comparisons {
            w[c.winner.index()] += 1;
        }
        Ok(w)
    }
}

/// Weighted workload on 0–100: each rating is scaled by 5 and weighted by
/// its comparison wins over 15.
pub fn tlx_weighted_score(response: &TlxResponse) -> Result<f64, TlxError> {
    let w = response.weights()?;
    let numerator: u32 = (0..6).map(|d| w[d] * u32::from(response.ratings[d]) * 5).sum();
    Ok(f64::from(numerator) / 15.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TlxLevel {
    Low,
    Medium,
    SomewhatHigh,
    High,
    VeryHigh,
}

impl TlxLevel {
    pub const ALL: [TlxLevel; 5] =
        [TlxLevel::Low, TlxLevel::Medium, TlxLevel::SomewhatHigh, TlxLevel::High, TlxLevel::VeryHigh];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Lower bounds of Medium, SomewhatHigh, High and VeryHigh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTable {
    pub bounds: [f64; 4],
}

impl Default for LevelTable {
    fn default() -> Self {
        Self { bounds: [10.0, 30.0, 50.0, 80.0] }
    }
}

pub fn tlx_level(score: f64, table: &LevelTable) -> TlxLevel {
    let above = table.bounds.iter().take_while(|b| score >= **b).count();
    TlxLevel::ALL[above]
}

/// A run of adjacent categories `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    pub first: usize,
    pub last: usize,
    pub count: usize,
}

/// Merges adjacent categories (given as per-category counts in scale order)
/// until every bin holds at least `min_count` observations. An underfull
/// tail joins the last full bin; if no bin ever fills, everything is one bin.
pub fn min_freq_bin(counts: &[usize], min_count: usize) -> Vec<Bin> {
    if counts.is_empty() {
        return Vec::new();
    }
    let mut bins: Vec<Bin> = Vec::new();
    let mut start = 0;
    let mut acc = 0;
    for (i, &c) in counts.iter().enumerate() {
        acc += c;
        if acc >= min_count.max(1) {
            bins.push(Bin { first: start, last: i, count: acc });
            start = i + 1;
            acc = 0;
        }
    }
    if start < counts.len() {
        match bins.last_mut() {
            Some(last) => {
                last.last = counts.len() - 1;
                last.count += acc;
            }
            None => bins.push(Bin { first: 0, last: counts.len() - 1, count: acc }),
        }
    }
    bins
}

/// Counts of `values` on the scale `lo..=hi`; out-of-range values are ignored.
pub fn category_counts(values: &[i64], lo: i64, hi: i64) -> Vec<usize> {
    let mut counts = vec![0usize; (hi - lo + 1).max(0) as usize];
    for &v in values {
        if (lo..=hi).contains(&v) {
            counts[(v - lo) as usize] += 1;
        }
    }
    counts
}

/// Index of the bin containing `category`.
pub fn bin_of(bins: &[Bin], category: usize) -> Option<usize> {
    bins.iter().position(|b| (b.first..=b.last).contains(&category))
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionMetrics {
    pub option: OptionId,
    pub edits: u64,
    pub dist_per_option: u64,
    pub time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionMetrics {
    pub step: usize,
    pub action: TracedAction,
    /// `None` for the first adjustment.
    pub distance: Option<i64>,
    pub cumulative: u64,
    pub pct_remaining: f64,
    pub size: AdjustmentSize,
}

/// Everything the metric export reports for one session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub condition: Condition,
    pub options: Vec<OptionMetrics>,
    pub actions: Vec<ActionMetrics>,
    pub total_edits: u64,
    pub cumulative_distance: u64,
    pub duration_ms: u64,
}

pub fn session_metrics(log: &SessionLog) -> Result<SessionMetrics, ReplayError> {
    replay(&log.header, &log.events)?;
    let trace = action_trace(log)?;
    let per_action = edit_distance_per_action(&trace);
    let cumulative = cumulative_from_distances(&per_action);
    let per_option = edit_distance_per_option(&trace);
    let times = time_per_option_ms(log);
    let series = remaining_credit_series(&trace, log.header.budget);

    let mut edits: BTreeMap<&OptionId, u64> = BTreeMap::new();
    for a in &trace.actions {
        *edits.entry(&a.option).or_insert(0) += 1;
    }
    let options = per_option
        .iter()
        .map(|(o, d)| OptionMetrics {
            option: o.clone(),
            edits: edits.get(o).copied().unwrap_or(0),
            dist_per_option: *d,
            time_ms: times.get(o).copied().unwrap_or(0),
        })
        .collect();
    let actions = trace
        .actions
        .iter()
        .enumerate()
        .map(|(i, a)| ActionMetrics {
            step: i + 1,
            action: a.clone(),
            distance: i.checked_sub(1).map(|j| per_action[j]),
            cumulative: i.checked_sub(1).map_or(0, |j| cumulative[j]),
            pct_remaining: series[i].pct_remaining,
            size: series[i].size,
        })
        .collect();
    Ok(SessionMetrics {
        session_id: log.header.session_id.clone(),
        condition: log.header.condition,
        options,
        actions,
        total_edits: trace.actions.len() as u64,
        cumulative_distance: cumulative.last().copied().unwrap_or(0),
        duration_ms: session_duration_ms(log),
    })
}

/// `option_id` value of the per-session totals rows.
pub const TOTAL_ROW: &str = "*";

pub const METRIC_COLUMNS: [&str; 6] =
    ["session_id", "condition", "option_id", "edits", "dist_per_option", "time_s"];

pub const ACTION_COLUMNS: [&str; 14] = [
    "session_id",
    "condition",
    "step",
    "seq",
    "ts_ms",
    "option_id",
    "position",
    "distance",
    "cumulative",
    "old",
    "new",
    "remaining_after",
    "pct_remaining",
    "size_class",
];

fn seconds(ms: u64) -> String {
    format!("{}.{:03}", ms / 1000, ms % 1000)
}

/// Per-(session, option) rows followed by one totals row per session whose
/// `option_id` is [`TOTAL_ROW`]; totals carry the edit count, the final
/// cumulative distance and the session duration.
pub fn write_metrics_csv<W: Write>(sessions: &[SessionMetrics], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_COLUMNS)?;
    for s in sessions {
        for o in &s.options {
            w.write_record([
                s.session_id.as_str(),
                s.condition.label(),
                o.option.as_str(),
                &o.edits.to_string(),
                &o.dist_per_option.to_string(),
                &seconds(o.time_ms),
            ])?;
        }
    }
    for s in sessions {
        w.write_record([
            s.session_id.as_str(),
            s.condition.label(),
            TOTAL_ROW,
            &s.total_edits.to_string(),
            &s.cumulative_distance.to_string(),
            &seconds(s.duration_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per vote adjustment.
pub fn write_actions_csv<W: Write>(sessions: &[SessionMetrics], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ACTION_COLUMNS)?;
    for s in sessions {
        for a in &s.actions {
            let size = match a.size {
                AdjustmentSize::Small => "small",
                AdjustmentSize::Large => "large",
            };
            w.write_record([
                s.session_id.as_str(),
                s.condition.label(),
                &a.step.to_string(),
                &a.action.seq.to_string(),
                &a.action.ts_ms.to_string(),
                a.action.option.as_str(),
                &a.action.position.to_string(),
                &a.distance.map(|d| d.to_string()).unwrap_or_default(),
                &a.cumulative.to_string(),
                &a.action.old.0.to_string(),
                &a.action.new.0.to_string(),
                &a.action.remaining_after.0.to_string(),
                &format!("{:.3}", a.pct_remaining),
                size,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Event, Phase, SessionHeader};
    use crate::survey::{Interface, LengthArm};
    use proptest::prelude::*;

    fn trace_of(steps: &[(&str, usize)]) -> ActionTrace {
        let mut options: Vec<OptionId> = steps.iter().map(|(o, _)| OptionId::from(*o)).collect();
        options.sort();
        options.dedup();
        ActionTrace {
            options,
            actions: steps
                .iter()
                .enumerate()
                .map(|(i, (o, p))| TracedAction {
                    seq: i as u64 + 1,
                    ts_ms: 0,
                    option: OptionId::from(*o),
                    position: *p,
                    old: VoteCount(0),
                    new: VoteCount(1),
                    remaining_after: Credits(0),
                })
                .collect(),
        }
    }

    #[test]
    fn per_action_examples() {
        assert_eq!(edit_distance_per_action(&trace_of(&[("a", 0), ("b", 3), ("c", 1)])), vec![3, -2]);
        assert!(edit_distance_per_action(&trace_of(&[("a", 4)])).is_empty());
        assert_eq!(edit_distance_per_action(&trace_of(&[("a", 2), ("a", 2), ("a", 2)])), vec![0, 0]);
    }

    #[test]
    fn per_option_examples() {
        let t = trace_of(&[("A", 0), ("B", 3), ("A", 1)]);
        let per = edit_distance_per_option(&t);
        assert_eq!(per[&OptionId::from("A")], 2);
        assert_eq!(per[&OptionId::from("B")], 3);
        let single = edit_distance_per_option(&trace_of(&[("X", 5), ("X", 5)]));
        assert_eq!(single[&OptionId::from("X")], 0);
        let total: u64 = per.values().sum();
        assert_eq!(Some(&total), cumulative_edit_distance(&t).last());
    }

    #[test]
    fn never_edited_options_report_zero() {
        let mut t = trace_of(&[("A", 0), ("B", 3)]);
        t.options.push("C".into());
        assert_eq!(edit_distance_per_option(&t)[&OptionId::from("C")], 0);
    }

    #[test]
    fn cumulative_examples() {
        assert_eq!(cumulative_from_distances(&[3, -2]), vec![3, 5]);
        assert!(cumulative_from_distances(&[]).is_empty());
    }

    fn text_header(options: &[&str]) -> SessionHeader {
        SessionHeader {
            session_id: "s".into(),
            survey_id: "v".into(),
            condition: Condition { length: LengthArm::Short, interface: Interface::TwoPhase },
            budget: Credits(36),
            options: options.iter().map(|o| OptionId::from(*o)).collect(),
            display_seed: 1,
            simulated: false,
            created_ms: None,
        }
    }

    #[test]
    fn time_attribution_to_later_event() {
        let h = text_header(&["A", "B"]);
        let state = SessionState::initial(&h);
        let a = state.queue[0].clone();
        let events = vec![
            Event::new("s", 1, 10_000, Phase::Organize, EventKind::OrgPresent { option: a.clone() }),
            Event::new(
                "s",
                2,
                12_000,
                Phase::Organize,
                EventKind::OrgCategorize { option: a.clone(), choice: crate::events::OrgChoice::LeanPositive },
            ),
            Event::new("s", 3, 12_500, Phase::Organize, EventKind::PhaseNav { from: Phase::Organize, to: Phase::Vote }),
            Event::new(
                "s",
                4,
                15_500,
                Phase::Vote,
                EventKind::VoteSet { option: a.clone(), old: VoteCount(0), new: VoteCount(1), remaining_after: Credits(35) },
            ),
        ];
        let log = SessionLog { header: h, events };
        let t = time_per_option(&log);
        assert_eq!(t[&a], 5.0);
        let other = log.header.options.iter().find(|o| **o != a).unwrap();
        assert_eq!(t[other], 0.0);
        let attributed: u64 = time_per_option_ms(&log).values().sum();
        assert!(session_duration_ms(&log) >= attributed);
        assert_eq!(session_duration_ms(&log), 5_500);
    }

    #[test]
    fn non_monotone_client_clock_falls_back_to_receipt() {
        let h = text_header(&["A"]);
        let a = OptionId::from("A");
        let mut e1 = Event::new("s", 1, 5_000, Phase::Organize, EventKind::OrgPresent { option: a.clone() });
        let mut e2 = Event::new("s", 2, 1_000, Phase::Organize, EventKind::OrgPresent { option: a.clone() });
        e1.received_ms = Some(100);
        e2.received_ms = Some(2_100);
        let log = SessionLog { header: h, events: vec![e1, e2] };
        assert_eq!(effective_timestamps(&log), vec![100, 2_100]);
        assert_eq!(time_per_option_ms(&log)[&a], 2_000);
    }

    #[test]
    fn adjustment_classes() {
        assert_eq!(classify_adjustment(VoteCount(0), VoteCount(2)), AdjustmentSize::Small);
        assert_eq!(classify_adjustment(VoteCount(1), VoteCount(4)), AdjustmentSize::Large);
        assert_eq!(classify_adjustment(VoteCount(-1), VoteCount(-1)), AdjustmentSize::Small);
        assert_eq!(classify_adjustment(VoteCount(-1), VoteCount(1)), AdjustmentSize::Small);
        assert_eq!(classify_adjustment(VoteCount(-2), VoteCount(1)), AdjustmentSize::Large);
    }

    #[test]
    fn remaining_percentages() {
        let mut t = trace_of(&[("a", 0)]);
        t.actions[0].remaining_after = Credits(46);
        t.actions[0].old = VoteCount(0);
        t.actions[0].new = VoteCount(3);
        let s = remaining_credit_series(&t, Credits(100));
        assert_eq!(s[0].pct_remaining, 46.0);
        assert_eq!(s[0].size, AdjustmentSize::Large);
    }

    fn response(ratings: [u8; 6], winner: impl Fn(TlxDimension, TlxDimension) -> TlxDimension) -> TlxResponse {
        TlxResponse {
            ratings,
            comparisons: TlxDimension::pairs()
                .into_iter()
                .map(|(a, b)| PairwiseChoice { a, b, winner: winner(a, b) })
                .collect(),
        }
    }

    #[test]
    fn tlx_score_examples() {
        let first = |a: TlxDimension, _b| a;
        assert_eq!(tlx_weighted_score(&response([0; 6], first)).unwrap(), 0.0);
        assert_eq!(tlx_weighted_score(&response([20; 6], first)).unwrap(), 100.0);
        let r = response([20, 0, 0, 0, 0, 0], first);
        assert_eq!(r.weights().unwrap(), [5, 4, 3, 2, 1, 0]);
        let score = tlx_weighted_score(&r).unwrap();
        assert!((score - 100.0 * 5.0 / 15.0).abs() < 1e-12);
        assert!((score - 33.33).abs() < 0.01);
    }

    #[test]
    fn tlx_rejects_malformed_comparisons() {
        let mut r = response([10; 6], |a, _| a);
        r.comparisons.pop();
        assert_eq!(r.weights(), Err(TlxError::ComparisonCount(14)));
        let mut r = response([10; 6], |a, _| a);
        r.comparisons[0].winner = TlxDimension::Frustration;
        assert!(matches!(r.weights(), Err(TlxError::WinnerNotInPair { .. })));
        let mut r = response([10; 6], |a, _| a);
        r.comparisons[1] = r.comparisons[0];
        assert!(matches!(r.weights(), Err(TlxError::RepeatedPair { .. })));
        let r = response([21, 0, 0, 0, 0, 0], |a, _| a);
        assert!(matches!(r.weights(), Err(TlxError::RatingOutOfRange { .. })));
    }

    #[test]
    fn tlx_levels() {
        let t = LevelTable::default();
        assert_eq!(tlx_level(0.0, &t), TlxLevel::Low);
        assert_eq!(tlx_level(100.0, &t), TlxLevel::VeryHigh);
        assert_eq!(tlx_level(42.70, &t), TlxLevel::SomewhatHigh);
        assert_eq!(tlx_level(10.0, &t), TlxLevel::Medium);
        assert_eq!(tlx_level(79.99, &t), TlxLevel::High);
    }

    #[test]
    fn binning_examples() {
        let bins = min_freq_bin(&[3, 4, 5, 9], 10);
        assert_eq!(bins, vec![Bin { first: 0, last: 3, count: 21 }]);
        let bins = min_freq_bin(&[6, 5, 9, 10], 10);
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![11, 19]);
        assert_eq!(bins[0], Bin { first: 0, last: 1, count: 11 });
        assert_eq!(min_freq_bin(&[0, 0, 14, 0], 10), vec![Bin { first: 0, last: 3, count: 14 }]);
        let identity = min_freq_bin(&[1, 2, 3], 1);
        assert_eq!(identity.len(), 3);
        assert_eq!(min_freq_bin(&[2, 3], 10), vec![Bin { first: 0, last: 1, count: 5 }]);
        assert_eq!(bin_of(&bins, 2), Some(1));
    }

    proptest! {
        #[test]
        fn tlx_monotone_in_ratings(
            ratings in prop::array::uniform6(0u8..=20),
            which in 0usize..6,
            bump in 1u8..=20,
            winners in prop::collection::vec(any::<bool>(), 15),
        ) {
            let pairs = TlxDimension::pairs();
            let build = |ratings: [u8; 6]| TlxResponse {
                ratings,
                comparisons: pairs.iter().zip(&winners).map(|(&(a, b), &w)| PairwiseChoice { a, b, winner: if w { a } else { b } }).collect(),
            };
            let base = tlx_weighted_score(&build(ratings)).unwrap();
            let mut higher = ratings;
            higher[which] = (higher[which] + bump).min(20);
            let raised = tlx_weighted_score(&build(higher)).unwrap();
            prop_assert!(raised >= base);
            prop_assert!((0.0..=100.0).contains(&base));
        }

        #[test]
        fn bins_meet_minimum(counts in prop::collection::vec(0usize..8, 1..25), min in 1usize..15) {
            let bins = min_freq_bin(&counts, min);
            let total: usize = counts.iter().sum();
            prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), total);
            prop_assert_eq!(bins[0].first, 0);
            prop_assert_eq!(bins.last().unwrap().last, counts.len() - 1);
            for w in bins.windows(2) {
                prop_assert_eq!(w[1].first, w[0].last + 1);
            }
            if total >= min {
                prop_assert!(bins.iter().all(|b| b.count >= min));
            } else {
                prop_assert_eq!(bins.len(), 1);
            }
        }
    }
}
