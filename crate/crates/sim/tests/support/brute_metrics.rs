//! Brute-force re-derivation of the clickstream metrics from raw events.
//!
//! Positions come from rebuilding the on-screen list from scratch before
//! every vote, with no shared code from the metrics module.

use std::collections::BTreeMap;

use qs_core::events::{Category, OrgChoice};
use qs_core::metrics::{action_trace, edit_distance_per_action, edit_distance_per_option, cumulative_edit_distance,
    session_metrics, time_per_option};
use qs_core::{EventKind, Interface, SessionLog};

#[derive(Default)]
struct Screen {
    flat: Vec<String>,
    /// Lean positive, neutral, negative, then the organize stack.
    lists: [Vec<String>; 4],
    votes: BTreeMap<String, i64>,
}

fn slot(c: Category) -> usize {
    match c {
        Category::LeanPositive => 0,
        Category::LeanNeutral => 1,
        Category::LeanNegative => 2,
        Category::SkippedUndecided => 3,
    }
}

impl Screen {
    fn open(log: &SessionLog) -> Self {
        let order: Vec<String> = log.header.display_order().into_iter().map(|o| o.0).collect();
        let mut s = Screen::default();
        match log.header.interface() {
            Interface::Text => s.flat = order,
            Interface::TwoPhase => s.lists[3] = order,
        }
        s
    }

    fn apply(&mut self, kind: &EventKind) {
        match kind {
            EventKind::OrgCategorize { choice, .. } => {
                let id = self.lists[3].remove(0);
                let to = match choice {
                    OrgChoice::LeanPositive => 0,
                    OrgChoice::LeanNeutral => 1,
                    OrgChoice::LeanNegative => 2,
                    OrgChoice::Skip => 3,
                };
                self.lists[to].push(id);
            }
            EventKind::DragMove { from, to, .. } => {
                let id = self.lists[slot(from.category)].remove(from.index);
                self.lists[slot(to.category)].insert(to.index, id);
            }
            EventKind::SortCategory { category } => {
                let votes = &self.votes;
                // Stable ascending insertion sort.
                let list = &mut self.lists[slot(*category)];
                for i in 1..list.len() {
                    let mut j = i;
                    let v = |id: &String| votes.get(id).copied().unwrap_or(0);
                    while j > 0 && v(&list[j - 1]) > v(&list[j]) {
                        list.swap(j - 1, j);
                        j -= 1;
                    }
                }
            }
            EventKind::VoteSet { option, new, .. } => {
                self.votes.insert(option.0.clone(), new.0);
            }
            _ => {}
        }
    }

    fn position(&self, id: &str) -> usize {
        let all: Vec<&String> = self.flat.iter().chain(self.lists.iter().flatten()).collect();
        all.iter().position(|x| x.as_str() == id).expect("option is on screen")
    }
}

/// Checks every metric of `log` against the brute-force derivation.
pub fn check_session(log: &SessionLog) -> Result<(), String> {
    // Positions of each vote's target, re-simulating from the start each time.
    let mut positions: Vec<(String, i64)> = Vec::new();
    for (i, e) in log.events.iter().enumerate() {
        if let EventKind::VoteSet { option, .. } = &e.kind {
            let mut screen = Screen::open(log);
            for earlier in &log.events[..i] {
                screen.apply(&earlier.kind);
            }
            positions.push((option.0.clone(), screen.position(&option.0) as i64));
        }
    }
    let expected_d: Vec<i64> = positions.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let mut expected_per_option: BTreeMap<String, u64> = log.header.options.iter().map(|o| (o.0.clone(), 0)).collect();
    for (k, d) in expected_d.iter().enumerate() {
        *expected_per_option.get_mut(&positions[k + 1].0).expect("known") += d.unsigned_abs();
    }
    let mut running = 0u64;
    let expected_cum: Vec<u64> = expected_d.iter().map(|d| {
        running += d.unsigned_abs();
        running
    }).collect();

    let mut expected_ms: BTreeMap<String, u64> = log.header.options.iter().map(|o| (o.0.clone(), 0)).collect();
    for w in log.events.windows(2) {
        if let Some(target) = w[1].kind.target() {
            *expected_ms.get_mut(&target.0).expect("known") += w[1].ts_ms - w[0].ts_ms;
        }
    }

    let trace = action_trace(log).map_err(|e| format!("trace: {e}"))?;
    let got_d = edit_distance_per_action(&trace);
    if got_d != expected_d {
        return Err(format!("per-action distances differ: {got_d:?} vs {expected_d:?}"));
    }
    let got_per_option: BTreeMap<String, u64> =
        edit_distance_per_option(&trace).into_iter().map(|(o, d)| (o.0, d)).collect();
    if got_per_option != expected_per_option {
        return Err(format!("per-option distances differ: {got_per_option:?} vs {expected_per_option:?}"));
    }
    let got_cum = cumulative_edit_distance(&trace);
    if got_cum != expected_cum {
        return Err(format!("cumulative distances differ: {got_cum:?} vs {expected_cum:?}"));
    }
    let final_cum = expected_cum.last().copied().unwrap_or(0);
    if got_per_option.values().sum::<u64>() != final_cum {
        return Err("per-option distances do not sum to the cumulative total".into());
    }
    for (o, secs) in time_per_option(log) {
        let want = expected_ms[&o.0] as f64 / 1000.0;
        if (secs - want).abs() > 1e-3 {
            return Err(format!("time for {}: {secs} s vs {want} s", o.0));
        }
    }
    let m = session_metrics(log).map_err(|e| format!("metrics: {e}"))?;
    if m.cumulative_distance != final_cum || m.options.iter().map(|o| o.dist_per_option).sum::<u64>() != final_cum {
        return Err("session export breaks the partition identity".into());
    }
    if m.total_edits != positions.len() as u64 {
        return Err(format!("edit count {} vs {}", m.total_edits, positions.len()));
    }
    Ok(())
}
