//! Clickstream events, the per-session interface state machine and replay.
//!
//! A session log is a header record followed by events, one JSON object per
//! line. [`SessionState`] is advanced only through [`SessionState::apply`],
//! which rejects any event that is illegal in the current state, so every
//! state reachable by replay is budget-valid.
//!
//! Two-phase layout: the three lean categories hold the options the
//! respondent has categorized, in the order they were placed; every other
//! option sits in the organization queue, which the voting layout shows as
//! the Skipped/Undecided category. Display positions index the concatenation
//! Lean Positive, Lean Neutral, Lean Negative, Skipped/Undecided.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::mechanism::{
    affordable_votes, remaining_credits, validate_ballot, Ballot, Credits, OptionId, OverBudget,
    VoteCount,
};
use crate::survey::{shuffle_display, Condition, Interface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Organize,
    Vote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    LeanPositive,
    LeanNeutral,
    LeanNegative,
    SkippedUndecided,
}

impl Category {
    /// Voting-layout order.
    pub const ORDER: [Category; 4] = [
        Category::LeanPositive,
        Category::LeanNeutral,
        Category::LeanNegative,
        Category::SkippedUndecided,
    ];

    fn lean_index(self) -> Option<usize> {
        match self {
            Category::LeanPositive => Some(0),
            Category::LeanNeutral => Some(1),
            Category::LeanNegative => Some(2),
            Category::SkippedUndecided => None,
        }
    }
}

/// The four buttons shown next to the presented option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrgChoice {
    LeanPositive,
    LeanNeutral,
    LeanNegative,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub category: Category,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    OrgPresent {
        option: OptionId,
    },
    OrgCategorize {
        option: OptionId,
        choice: OrgChoice,
    },
    DragMove {
        option: OptionId,
        from: Slot,
        to: Slot,
    },
    PhaseNav {
        from: Phase,
        to: Phase,
    },
    VoteSet {
        option: OptionId,
        old: VoteCount,
        new: VoteCount,
        remaining_after: Credits,
    },
    SortCategory {
        category: Category,
    },
    Submit {
        ballot: Ballot,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::OrgPresent { .. } => "org_present",
            EventKind::OrgCategorize { .. } => "org_categorize",
            EventKind::DragMove { .. } => "drag_move",
            EventKind::PhaseNav { .. } => "phase_nav",
            EventKind::VoteSet { .. } => "vote_set",
            EventKind::SortCategory { .. } => "sort_category",
            EventKind::Submit { .. } => "submit",
        }
    }

    /// The option this event acts on, if any.
    pub fn target(&self) -> Option<&OptionId> {
        match self {
            EventKind::OrgPresent { option }
            | EventKind::OrgCategorize { option, .. }
            | EventKind::DragMove { option, .. }
            | EventKind::VoteSet { option, .. } => Some(option),
            EventKind::PhaseNav { .. } | EventKind::SortCategory { .. } | EventKind::Submit { .. } => {
                None
            }
        }
    }

    fn payload_fields(kind: &str) -> Option<&'static [&'static str]> {
        Some(match kind {
            "org_present" => &["option"],
            "org_categorize" => &["option", "choice"],
            "drag_move" => &["option", "from", "to"],
            "phase_nav" => &["from", "to"],
            "vote_set" => &["option", "old", "new", "remaining_after"],
            "sort_category" => &["category"],
            "submit" => &["ballot"],
            _ => return None,
        })
    }
}

/// One clickstream record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub session_id: String,
    pub seq: u64,
    /// Client clock, epoch milliseconds.
    pub ts_ms: u64,
    pub phase: Phase,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Server receipt time, set on ingestion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_ms: Option<u64>,
    /// Unrecognized fields kept by lenient parsing; written back verbatim.
    #[serde(skip)]
    pub extra: BTreeMap<String, Value>,
}

const COMMON_FIELDS: [&str; 6] = ["session_id", "seq", "ts_ms", "phase", "kind", "received_ms"];

/// Whether unknown fields in a log line are an error or carried along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown field `{field}`")]
    UnknownField { line: usize, field: String },
    #[error("log has no session header")]
    MissingHeader,
    #[error("line {line}: event belongs to session `{found}`, expected `{expected}`")]
    ForeignEvent { line: usize, expected: String, found: String },
}

impl Event {
    pub fn new(session_id: impl Into<String>, seq: u64, ts_ms: u64, phase: Phase, kind: EventKind) -> Self {
        Self {
            session_id: session_id.into(),
            seq,
            ts_ms,
            phase,
            kind,
            received_ms: None,
            extra: BTreeMap::new(),
        }
    }

    /// Canonical single-line encoding.
    pub fn to_line(&self) -> String {
        if self.extra.is_empty() {
            return serde_json::to_string(self).expect("event serializes");
        }
        let mut line = serde_json::to_string(self).expect("event serializes");
        line.pop();
        for (k, v) in &self.extra {
            line.push(',');
            line.push_str(&serde_json::to_string(k).expect("key serializes"));
            line.push(':');
            line.push_str(&v.to_string());
        }
        line.push('}');
        line
    }

    pub fn from_value(value: Value, mode: ParseMode, line: usize) -> Result<Self, LogError> {
        let malformed = |message: String| LogError::Malformed { line, message };
        let Value::Object(mut map) = value else {
            return Err(malformed("record is not an object".into()));
        };
        let kind = map
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing `kind`".into()))?
            .to_owned();
        let payload = EventKind::payload_fields(&kind)
            .ok_or_else(|| malformed(format!("unknown event kind `{kind}`")))?;
        let unknown: Vec<String> = map
            .keys()
            .filter(|k| !COMMON_FIELDS.contains(&k.as_str()) && !payload.contains(&k.as_str()))
            .cloned()
            .collect();
        let mut extra = BTreeMap::new();
        if let Some(field) = unknown.first() {
            if mode == ParseMode::Strict {
                return Err(LogError::UnknownField { line, field: field.clone() });
            }
            for k in unknown {
                let v = map.remove(&k).expect("key present");
                extra.insert(k, v);
            }
        }
        let mut event: Event =
            serde_json::from_value(Value::Object(map)).map_err(|e| malformed(e.to_string()))?;
        event.extra = extra;
        Ok(event)
    }

    pub fn parse_line(line: &str, mode: ParseMode) -> Result<Self, LogError> {
        let value: Value = serde_json::from_str(line).map_err(|e| LogError::Malformed {
            line: 1,
            message: e.to_string(),
        })?;
        Self::from_value(value, mode, 1)
    }
}

/// First record of every session log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub session_id: String,
    pub survey_id: String,
    pub condition: Condition,
    pub budget: Credits,
    /// Drawn options in draw order.
    pub options: Vec<OptionId>,
    pub display_seed: u64,
    #[serde(default)]
    pub simulated: bool,
    /// Server clock at session creation, epoch milliseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_ms: Option<u64>,
}

impl SessionHeader {
    pub fn interface(&self) -> Interface {
        self.condition.interface
    }

    /// Options in initial display order.
    pub fn display_order(&self) -> Vec<OptionId> {
        shuffle_display(self.options.len(), self.display_seed)
            .into_iter()
            .map(|i| self.options[i].clone())
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HeaderRecord {
    SessionHeader(SessionHeader),
}

/// A header plus its events, in log order.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub events: Vec<Event>,
}

impl SessionLog {
    pub fn header_line(header: &SessionHeader) -> String {
        serde_json::to_string(&HeaderRecord::SessionHeader(header.clone())).expect("header serializes")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Self::header_line(&self.header);
        out.push('\n');
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, mode: ParseMode) -> Result<Self, LogError> {
        let mut header: Option<SessionHeader> = None;
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(raw).map_err(|e| LogError::Malformed {
                line,
                message: e.to_string(),
            })?;
            if value.get("kind").and_then(Value::as_str) == Some("session_header") {
                if header.is_some() {
                    return Err(LogError::Malformed { line, message: "second session header".into() });
                }
                let HeaderRecord::SessionHeader(h) =
                    serde_json::from_value(value).map_err(|e| LogError::Malformed {
                        line,
                        message: e.to_string(),
                    })?;
                header = Some(h);
                continue;
            }
            let Some(h) = header.as_ref() else {
                return Err(LogError::MissingHeader);
            };
            let event = Event::from_value(value, mode, line)?;
            if event.session_id != h.session_id {
                return Err(LogError::ForeignEvent {
                    line,
                    expected: h.session_id.clone(),
                    found: event.session_id,
                });
            }
            events.push(event);
        }
        Ok(SessionLog { header: header.ok_or(LogError::MissingHeader)?, events })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum IllegalEvent {
    #[error("event for session `{found}` applied to session `{expected}`")]
    WrongSession { expected: String, found: String },
    #[error("stale seq {seq}: last accepted seq was {last}")]
    StaleSeq { last: u64, seq: u64 },
    #[error("session already submitted")]
    AlreadySubmitted,
    #[error("event tagged {event:?} phase but session is in {state:?} phase")]
    PhaseMismatch { state: Phase, event: Phase },
    #[error("{kind} is not allowed in {phase:?} phase")]
    WrongPhase { kind: String, phase: Phase },
    #[error("{kind} is not available in the text interface")]
    NotInTextInterface { kind: String },
    #[error("unknown option `{option}`")]
    UnknownOption { option: OptionId },
    #[error("option `{option}` is not the presented option")]
    NotPresented { option: OptionId, presented: Option<OptionId> },
    #[error("option `{option}` is not at {from:?}")]
    SlotMismatch { option: OptionId, from: Slot },
    #[error("target slot {to:?} is out of range")]
    SlotOutOfRange { to: Slot },
    #[error("options can only be returned to the stack in the organize phase")]
    ReturnToStackInVote,
    #[error("vote on `{option}` is {current}, event claims {claimed}")]
    StaleVote { option: OptionId, current: VoteCount, claimed: VoteCount },
    #[error("setting `{option}` to {new} exceeds the budget")]
    Unaffordable { option: OptionId, new: VoteCount },
    #[error("remaining_after {claimed} disagrees with computed {expected}")]
    RemainingMismatch { expected: Credits, claimed: Credits },
    #[error("submitted ballot differs from the session ballot")]
    BallotMismatch,
    #[error(transparent)]
    OverBudget(OverBudget),
    #[error("phase navigation must change phase")]
    NoopPhaseNav,
}

/// Replayable interface state of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub condition: Condition,
    pub budget: Credits,
    pub options: Vec<OptionId>,
    pub phase: Phase,
    /// Two-phase: the organization queue (unseen and skipped options).
    pub queue: Vec<OptionId>,
    /// Two-phase: Lean Positive, Lean Neutral, Lean Negative.
    pub lean: [Vec<OptionId>; 3],
    /// Text: the shuffled flat list.
    pub flat: Vec<OptionId>,
    pub ballot: Ballot,
    pub last_seq: Option<u64>,
    pub last_ts_ms: Option<u64>,
    pub submitted: bool,
}

impl SessionState {
    pub fn initial(header: &SessionHeader) -> Self {
        let order = header.display_order();
        let (phase, queue, flat) = match header.interface() {
            Interface::Text => (Phase::Vote, Vec::new(), order),
            Interface::TwoPhase => (Phase::Organize, order, Vec::new()),
        };
        Self {
            session_id: header.session_id.clone(),
            condition: header.condition,
            budget: header.budget,
            options: header.options.clone(),
            phase,
            queue,
            lean: [Vec::new(), Vec::new(), Vec::new()],
            flat,
            ballot: Ballot::new(),
            last_seq: None,
            last_ts_ms: None,
            submitted: false,
        }
    }

    pub fn interface(&self) -> Interface {
        self.condition.interface
    }

    /// Option currently shown on the organization card.
    pub fn presented(&self) -> Option<&OptionId> {
        match (self.interface(), self.phase) {
            (Interface::TwoPhase, Phase::Organize) => self.queue.first(),
            _ => None,
        }
    }

    pub fn category(&self, category: Category) -> &[OptionId] {
        match category.lean_index() {
            Some(i) => &self.lean[i],
            None => &self.queue,
        }
    }

    fn category_mut(&mut self, category: Category) -> &mut Vec<OptionId> {
        match category.lean_index() {
            Some(i) => &mut self.lean[i],
            None => &mut self.queue,
        }
    }

    /// Options top to bottom as laid out on the voting page.
    pub fn layout(&self) -> Vec<&OptionId> {
        match self.interface() {
            Interface::Text => self.flat.iter().collect(),
            Interface::TwoPhase => Category::ORDER
                .iter()
                .flat_map(|c| self.category(*c).iter())
                .collect(),
        }
    }

    /// 0-based position of `option` in the voting layout.
    pub fn display_position(&self, option: &OptionId) -> Option<usize> {
        match self.interface() {
            Interface::Text => self.flat.iter().position(|o| o == option),
            Interface::TwoPhase => {
                let mut offset = 0;
                for c in Category::ORDER {
                    let list = self.category(c);
                    if let Some(i) = list.iter().position(|o| o == option) {
                        return Some(offset + i);
                    }
                    offset += list.len();
                }
                None
            }
        }
    }

    pub fn remaining(&self) -> Credits {
        remaining_credits(&self.ballot, self.budget).expect("state ballot is always within budget")
    }

    /// Remaining credits if `option` were set to `new`, or `None` when unaffordable.
    pub fn remaining_if(&self, option: &OptionId, new: VoteCount) -> Option<Credits> {
        let mut trial = self.ballot.clone();
        trial.set(option.clone(), new);
        remaining_credits(&trial, self.budget)
    }

    fn check_known(&self, option: &OptionId) -> Result<(), IllegalEvent> {
        if self.options.contains(option) {
            Ok(())
        } else {
            Err(IllegalEvent::UnknownOption { option: option.clone() })
        }
    }

    fn require_phase(&self, kind: &EventKind, phase: Phase) -> Result<(), IllegalEvent> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(IllegalEvent::WrongPhase { kind: kind.name().into(), phase: self.phase })
        }
    }

    fn require_two_phase(&self, kind: &EventKind) -> Result<(), IllegalEvent> {
        if self.interface() == Interface::TwoPhase {
            Ok(())
        } else {
            Err(IllegalEvent::NotInTextInterface { kind: kind.name().into() })
        }
    }

    /// Checks `event` against the current state without changing it.
    pub fn check(&self, event: &Event) -> Result<(), IllegalEvent> {
        if event.session_id != self.session_id {
            return Err(IllegalEvent::WrongSession {
                expected: self.session_id.clone(),
                found: event.session_id.clone(),
            });
        }
        if let Some(last) = self.last_seq {
            if event.seq <= last {
                return Err(IllegalEvent::StaleSeq { last, seq: event.seq });
            }
        }
        if self.submitted {
            return Err(IllegalEvent::AlreadySubmitted);
        }
        let kind = &event.kind;
        if let EventKind::PhaseNav { .. } | EventKind::OrgPresent { .. } | EventKind::OrgCategorize { .. }
        | EventKind::DragMove { .. } | EventKind::SortCategory { .. } = kind
        {
            self.require_two_phase(kind)?;
        }
        if event.phase != self.phase {
            return Err(IllegalEvent::PhaseMismatch { state: self.phase, event: event.phase });
        }
        match kind {
            EventKind::OrgPresent { option } | EventKind::OrgCategorize { option, .. } => {
                self.require_phase(kind, Phase::Organize)?;
                self.check_known(option)?;
                if self.presented() != Some(option) {
                    return Err(IllegalEvent::NotPresented {
                        option: option.clone(),
                        presented: self.presented().cloned(),
                    });
                }
            }
            EventKind::DragMove { option, from, to } => {
                self.check_known(option)?;
                if self.category(from.category).get(from.index) != Some(option) {
                    return Err(IllegalEvent::SlotMismatch { option: option.clone(), from: *from });
                }
                if to.category == Category::SkippedUndecided
                    && from.category != Category::SkippedUndecided
                    && self.phase == Phase::Vote
                {
                    return Err(IllegalEvent::ReturnToStackInVote);
                }
                let target_len = self.category(to.category).len()
                    - usize::from(to.category == from.category);
                if to.index > target_len {
                    return Err(IllegalEvent::SlotOutOfRange { to: *to });
                }
            }
            EventKind::PhaseNav { from, to } => {
                if from != to {
                    self.require_phase(kind, *from)?;
                } else {
                    return Err(IllegalEvent::NoopPhaseNav);
                }
            }
            EventKind::VoteSet { option, old, new, remaining_after } => {
                self.require_phase(kind, Phase::Vote)?;
                self.check_known(option)?;
                let current = self.ballot.get(option);
                if current != *old {
                    return Err(IllegalEvent::StaleVote {
                        option: option.clone(),
                        current,
                        claimed: *old,
                    });
                }
                let Some(expected) = self.remaining_if(option, *new) else {
                    return Err(IllegalEvent::Unaffordable { option: option.clone(), new: *new });
                };
                if expected != *remaining_after {
                    return Err(IllegalEvent::RemainingMismatch { expected, claimed: *remaining_after });
                }
            }
            EventKind::SortCategory { .. } => {
                self.require_phase(kind, Phase::Vote)?;
            }
            EventKind::Submit { ballot } => {
                self.require_phase(kind, Phase::Vote)?;
                validate_ballot(ballot, self.budget).map_err(IllegalEvent::OverBudget)?;
                if *ballot != self.ballot {
                    return Err(IllegalEvent::BallotMismatch);
                }
            }
        }
        Ok(())
    }

    /// Applies `event` if it is legal; on error the state is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), IllegalEvent> {
        self.check(event)?;
        match &event.kind {
            EventKind::OrgPresent { .. } => {}
            EventKind::OrgCategorize { option, choice } => {
                let presented = self.queue.remove(0);
                debug_assert_eq!(&presented, option);
                let target = match choice {
                    OrgChoice::LeanPositive => Category::LeanPositive,
                    OrgChoice::LeanNeutral => Category::LeanNeutral,
                    OrgChoice::LeanNegative => Category::LeanNegative,
                    OrgChoice::Skip => Category::SkippedUndecided,
                };
                self.category_mut(target).push(presented);
            }
            EventKind::DragMove { from, to, .. } => {
                let moved = self.category_mut(from.category).remove(from.index);
                self.category_mut(to.category).insert(to.index, moved);
            }
            EventKind::PhaseNav { to, .. } => self.phase = *to,
            EventKind::VoteSet { option, new, .. } => {
                self.ballot.set(option.clone(), *new);
            }
            EventKind::SortCategory { category } => {
                let mut list = std::mem::take(self.category_mut(*category));
                list.sort_by_key(|o| self.ballot.get(o));
                *self.category_mut(*category) = list;
            }
            EventKind::Submit { .. } => self.submitted = true,
        }
        self.last_seq = Some(event.seq);
        self.last_ts_ms = Some(self.last_ts_ms.map_or(event.ts_ms, |t| t.max(event.ts_ms)));
        Ok(())
    }

    /// Vote values the dropdown for `option` may offer, with costs.
    pub fn affordable(&self, option: &OptionId) -> Result<Vec<crate::mechanism::AffordableVote>, IllegalEvent> {
        affordable_votes(&self.ballot, option, &self.options, self.budget)
            .map_err(|_| IllegalEvent::UnknownOption { option: option.clone() })
    }

    /// Structural invariants; used by tests and by the service after restart.
    pub fn check_invariants(&self) -> Result<(), String> {
        let placed: Vec<&OptionId> = match self.interface() {
            Interface::Text => {
                if !self.queue.is_empty() || self.lean.iter().any(|l| !l.is_empty()) {
                    return Err("text session has category contents".into());
                }
                if self.phase != Phase::Vote {
                    return Err("text session left the vote phase".into());
                }
                self.flat.iter().collect()
            }
            Interface::TwoPhase => {
                if !self.flat.is_empty() {
                    return Err("two-phase session has a flat list".into());
                }
                self.layout()
            }
        };
        if placed.len() != self.options.len() {
            return Err(format!("{} options placed, expected {}", placed.len(), self.options.len()));
        }
        let mut sorted: Vec<&OptionId> = placed.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != placed.len() || !self.options.iter().all(|o| sorted.binary_search(&o).is_ok()) {
            return Err("layout is not a permutation of the options".into());
        }
        validate_ballot(&self.ballot, self.budget).map_err(|e| e.to_string())?;
        if self.ballot.iter().any(|(o, _)| !self.options.contains(o)) {
            return Err("ballot names an unknown option".into());
        }
        Ok(())
    }
}

/// Returns the state after `event`, leaving `state` untouched.
pub fn append_event(state: &SessionState, event: &Event) -> Result<SessionState, IllegalEvent> {
    let mut next = state.clone();
    next.apply(event)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {index} rejected: {error}")]
pub struct ReplayError {
    pub index: usize,
    pub error: IllegalEvent,
}

/// Folds `events` over the initial state of `header`.
pub fn replay(header: &SessionHeader, events: &[Event]) -> Result<SessionState, ReplayError> {
    let mut state = SessionState::initial(header);
    for (index, event) in events.iter().enumerate() {
        state.apply(event).map_err(|error| ReplayError { index, error })?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::{Condition, LengthArm};

    fn header(interface: Interface, names: &[&str], budget: u64) -> SessionHeader {
        SessionHeader {
            session_id: "s".into(),
            survey_id: "v".into(),
            condition: Condition { length: LengthArm::Short, interface },
            budget: Credits(budget),
            options: names.iter().map(|n| OptionId::from(*n)).collect(),
            display_seed: 9,
            simulated: false,
            created_ms: None,
        }
    }

    /// Builds events with consecutive seq and timestamps.
    struct Script {
        state: SessionState,
        seq: u64,
    }

    impl Script {
        fn new(h: &SessionHeader) -> Self {
            Self { state: SessionState::initial(h), seq: 0 }
        }

        fn event(&self, kind: EventKind) -> Event {
            Event::new("s", self.seq + 1, 1000 * (self.seq + 1), self.state.phase, kind)
        }

        fn push(&mut self, kind: EventKind) -> Result<(), IllegalEvent> {
            let e = self.event(kind);
            self.state.apply(&e)?;
            self.seq += 1;
            Ok(())
        }

        fn categorize_front(&mut self, choice: OrgChoice) -> OptionId {
            let option = self.state.presented().unwrap().clone();
            self.push(EventKind::OrgPresent { option: option.clone() }).unwrap();
            self.push(EventKind::OrgCategorize { option: option.clone(), choice }).unwrap();
            option
        }

        fn vote(&mut self, option: &OptionId, new: i64) -> Result<(), IllegalEvent> {
            let old = self.state.ballot.get(option);
            let remaining_after = self.state.remaining_if(option, VoteCount(new)).unwrap_or(Credits(0));
            self.push(EventKind::VoteSet {
                option: option.clone(),
                old,
                new: VoteCount(new),
                remaining_after,
            })
        }
    }

    #[test]
    fn categorize_moves_presented_to_category_tail() {
        let h = header(Interface::TwoPhase, &["a", "b", "c", "d"], 36);
        let mut s = Script::new(&h);
        let first = s.categorize_front(OrgChoice::LeanPositive);
        assert_eq!(s.state.category(Category::LeanPositive), &[first.clone()]);
        assert_ne!(s.state.presented(), Some(&first));
        assert_eq!(s.state.queue.len(), 3);
        let second = s.categorize_front(OrgChoice::LeanPositive);
        assert_eq!(s.state.category(Category::LeanPositive), &[first, second]);
        s.state.check_invariants().unwrap();
    }

    #[test]
    fn skip_hides_option_until_later() {
        let h = header(Interface::TwoPhase, &["a", "b", "c"], 36);
        let mut s = Script::new(&h);
        let skipped = s.categorize_front(OrgChoice::Skip);
        assert_eq!(s.state.queue.last(), Some(&skipped));
        assert_ne!(s.state.presented(), Some(&skipped));
        s.categorize_front(OrgChoice::LeanNeutral);
        s.categorize_front(OrgChoice::LeanNegative);
        assert_eq!(s.state.presented(), Some(&skipped));
        s.categorize_front(OrgChoice::LeanPositive);
        assert!(s.state.queue.is_empty());
        assert_eq!(s.state.presented(), None);
    }

    #[test]
    fn categorize_requires_presented_option() {
        let h = header(Interface::TwoPhase, &["a", "b"], 36);
        let s = Script::new(&h);
        let other = s.state.queue[1].clone();
        let e = s.event(EventKind::OrgCategorize { option: other, choice: OrgChoice::LeanNeutral });
        assert!(matches!(s.state.check(&e), Err(IllegalEvent::NotPresented { .. })));
    }

    #[test]
    fn text_sessions_have_one_phase() {
        let h = header(Interface::Text, &["a", "b"], 36);
        let s = Script::new(&h);
        assert_eq!(s.state.phase, Phase::Vote);
        let e = s.event(EventKind::PhaseNav { from: Phase::Vote, to: Phase::Organize });
        assert!(matches!(s.state.check(&e), Err(IllegalEvent::NotInTextInterface { .. })));
        let e = s.event(EventKind::SortCategory { category: Category::LeanPositive });
        assert!(s.state.check(&e).is_err());
    }

    #[test]
    fn over_budget_vote_is_illegal() {
        let h = header(Interface::Text, &["a", "b"], 36);
        let mut s = Script::new(&h);
        let b = OptionId::from("b");
        s.vote(&b, 5).unwrap(); // remaining 11
        s.vote(&b, 4).unwrap(); // remaining 20
        s.vote(&b, 5).unwrap();
        assert_eq!(s.state.remaining(), Credits(11));
        let a = OptionId::from("a");
        // A: 0 -> 4 would need 16 > 11
        let e = s.event(EventKind::VoteSet {
            option: a.clone(),
            old: VoteCount(0),
            new: VoteCount(4),
            remaining_after: Credits(0),
        });
        assert!(matches!(s.state.check(&e), Err(IllegalEvent::Unaffordable { .. })));
        s.vote(&a, 3).unwrap();
        assert_eq!(s.state.remaining(), Credits(2));
    }

    #[test]
    fn vote_with_remaining_nine_rejects_plus_five() {
        let h = header(Interface::Text, &["a", "b"], 25);
        let mut s = Script::new(&h);
        s.vote(&"b".into(), 4).unwrap();
        assert_eq!(s.state.remaining(), Credits(9));
        let e = s.event(EventKind::VoteSet {
            option: "a".into(),
            old: VoteCount(0),
            new: VoteCount(5),
            remaining_after: Credits(0),
        });
        assert!(matches!(s.state.check(&e), Err(IllegalEvent::Unaffordable { .. })));
    }

    #[test]
    fn remaining_and_old_are_checked() {
        let h = header(Interface::Text, &["a"], 25);
        let s = Script::new(&h);
        let e = s.event(EventKind::VoteSet {
            option: "a".into(),
            old: VoteCount(0),
            new: VoteCount(2),
            remaining_after: Credits(20),
        });
        assert_eq!(
            s.state.check(&e),
            Err(IllegalEvent::RemainingMismatch { expected: Credits(21), claimed: Credits(20) })
        );
        let e = s.event(EventKind::VoteSet {
            option: "a".into(),
            old: VoteCount(1),
            new: VoteCount(2),
            remaining_after: Credits(21),
        });
        assert!(matches!(s.state.check(&e), Err(IllegalEvent::StaleVote { .. })));
    }

    fn two_phase_fixture() -> SessionState {
        // P=[a,b], N=[c], Neg=[], Skip=[d]
        let h = header(Interface::TwoPhase, &["a", "b", "c", "d"], 36);
        let mut st = SessionState::initial(&h);
        st.queue = vec!["d".into()];
        st.lean = [vec!["a".into(), "b".into()], vec!["c".into()], vec![]];
        st.phase = Phase::Vote;
        st
    }

    #[test]
    fn positions_concatenate_categories() {
        let st = two_phase_fixture();
        st.check_invariants().unwrap();
        assert_eq!(st.display_position(&"c".into()), Some(2));
        assert_eq!(st.display_position(&"d".into()), Some(3));
        assert_eq!(st.display_position(&"zz".into()), None);

        let drag = Event::new(
            "s",
            1,
            0,
            Phase::Vote,
            EventKind::DragMove {
                option: "b".into(),
                from: Slot { category: Category::LeanPositive, index: 1 },
                to: Slot { category: Category::LeanNegative, index: 0 },
            },
        );
        let after = append_event(&st, &drag).unwrap();
        // P=[a], N=[c], Neg=[b], Skip=[d]
        assert_eq!(after.display_position(&"b".into()), Some(2));
        assert_eq!(after.display_position(&"d".into()), Some(3));
        assert_eq!(st.display_position(&"b".into()), Some(1));
    }

    #[test]
    fn text_positions_follow_shuffle() {
        let h = header(Interface::Text, &["A", "B", "C"], 9);
        let st = SessionState::initial(&h);
        for (i, o) in h.display_order().iter().enumerate() {
            assert_eq!(st.display_position(o), Some(i));
        }
        let mut st = st;
        st.flat = vec!["C".into(), "A".into(), "B".into()];
        assert_eq!(st.display_position(&"A".into()), Some(1));
    }

    #[test]
    fn return_to_stack_only_while_organizing() {
        let st = two_phase_fixture();
        let kind = EventKind::DragMove {
            option: "a".into(),
            from: Slot { category: Category::LeanPositive, index: 0 },
            to: Slot { category: Category::SkippedUndecided, index: 0 },
        };
        let e = Event::new("s", 1, 0, Phase::Vote, kind.clone());
        assert_eq!(st.check(&e), Err(IllegalEvent::ReturnToStackInVote));
        let mut org = st.clone();
        org.phase = Phase::Organize;
        let e = Event::new("s", 1, 0, Phase::Organize, kind);
        let after = append_event(&org, &e).unwrap();
        assert_eq!(after.presented(), Some(&OptionId::from("a")));
    }

    #[test]
    fn drag_validates_slots() {
        let st = two_phase_fixture();
        let bad_from = Event::new(
            "s",
            1,
            0,
            Phase::Vote,
            EventKind::DragMove {
                option: "a".into(),
                from: Slot { category: Category::LeanPositive, index: 1 },
                to: Slot { category: Category::LeanNeutral, index: 0 },
            },
        );
        assert!(matches!(st.check(&bad_from), Err(IllegalEvent::SlotMismatch { .. })));
        let bad_to = Event::new(
            "s",
            1,
            0,
            Phase::Vote,
            EventKind::DragMove {
                option: "a".into(),
                from: Slot { category: Category::LeanPositive, index: 0 },
                to: Slot { category: Category::LeanNeutral, index: 2 },
            },
        );
        assert!(matches!(st.check(&bad_to), Err(IllegalEvent::SlotOutOfRange { .. })));
        let within = Event::new(
            "s",
            1,
            0,
            Phase::Vote,
            EventKind::DragMove {
                option: "a".into(),
                from: Slot { category: Category::LeanPositive, index: 0 },
                to: Slot { category: Category::LeanPositive, index: 1 },
            },
        );
        let after = append_event(&st, &within).unwrap();
        assert_eq!(after.category(Category::LeanPositive), &["b".into(), "a".into()] as &[OptionId]);
    }

    #[test]
    fn sort_is_ascending_and_stable() {
        let mut st = two_phase_fixture();
        st.lean[0] = vec!["a".into(), "b".into(), "c".into()];
        st.lean[1] = vec![];
        st.ballot = [("a", 3), ("b", 1), ("c", 2)].into_iter().collect();
        let sort = |st: &SessionState, c| {
            append_event(st, &Event::new("s", 1, 0, Phase::Vote, EventKind::SortCategory { category: c }))
                .unwrap()
        };
        let sorted = sort(&st, Category::LeanPositive);
        assert_eq!(sorted.lean[0], vec![OptionId::from("b"), "c".into(), "a".into()]);

        st.ballot = Ballot::new();
        let same = sort(&st, Category::LeanPositive);
        assert_eq!(same.lean[0], st.lean[0]);

        let empty = sort(&st, Category::LeanNegative);
        assert_eq!(empty.lean, st.lean);

        let mut org = st.clone();
        org.phase = Phase::Organize;
        let e = Event::new("s", 1, 0, Phase::Organize, EventKind::SortCategory { category: Category::LeanPositive });
        assert!(matches!(org.check(&e), Err(IllegalEvent::WrongPhase { .. })));
    }

    #[test]
    fn submit_and_seal() {
        let h = header(Interface::Text, &["a", "b"], 10);
        let mut s = Script::new(&h);
        s.vote(&"a".into(), 3).unwrap();
        let wrong: Ballot = [("a", 2)].into_iter().collect();
        assert_eq!(s.push(EventKind::Submit { ballot: wrong }), Err(IllegalEvent::BallotMismatch));
        let over: Ballot = [("a", 4)].into_iter().collect();
        assert!(matches!(s.push(EventKind::Submit { ballot: over }), Err(IllegalEvent::OverBudget(_))));
        let good = s.state.ballot.clone();
        s.push(EventKind::Submit { ballot: good }).unwrap();
        assert!(s.state.submitted);
        assert_eq!(s.vote(&"b".into(), 1), Err(IllegalEvent::AlreadySubmitted));
    }

    #[test]
    fn replay_reports_offending_index() {
        let h = header(Interface::Text, &["a"], 10);
        assert_eq!(replay(&h, &[]).unwrap(), SessionState::initial(&h));
        let vote = |seq, new: i64, old: i64| {
            Event::new(
                "s",
                seq,
                seq * 10,
                Phase::Vote,
                EventKind::VoteSet {
                    option: "a".into(),
                    old: VoteCount(old),
                    new: VoteCount(new),
                    remaining_after: Credits(10 - (new * new) as u64),
                },
            )
        };
        let events = vec![vote(1, 1, 0), vote(3, 2, 1), vote(2, 3, 2)];
        let err = replay(&h, &events).unwrap_err();
        assert_eq!(err.index, 2);
        assert!(matches!(err.error, IllegalEvent::StaleSeq { last: 3, seq: 2 }));
    }

    #[test]
    fn log_round_trip_and_strictness() {
        let h = header(Interface::TwoPhase, &["a", "b"], 10);
        let mut s = Script::new(&h);
        let mut events = Vec::new();
        let front = s.state.presented().unwrap().clone();
        for kind in [
            EventKind::OrgPresent { option: front.clone() },
            EventKind::OrgCategorize { option: front, choice: OrgChoice::Skip },
            EventKind::PhaseNav { from: Phase::Organize, to: Phase::Vote },
        ] {
            events.push(s.event(kind.clone()));
            s.push(kind).unwrap();
        }
        let log = SessionLog { header: h.clone(), events };
        let text = log.to_jsonl();
        assert!(text.starts_with("{\"kind\":\"session_header\""));
        assert_eq!(SessionLog::parse(&text, ParseMode::Strict).unwrap(), log);

        let line = r#"{"session_id":"s","seq":1,"ts_ms":5,"phase":"vote","kind":"sort_category","category":"lean_neutral","client":"x"}"#;
        assert!(matches!(
            Event::parse_line(line, ParseMode::Strict),
            Err(LogError::UnknownField { .. })
        ));
        let lenient = Event::parse_line(line, ParseMode::Lenient).unwrap();
        assert_eq!(lenient.extra.get("client"), Some(&Value::String("x".into())));
        let again = Event::parse_line(&lenient.to_line(), ParseMode::Lenient).unwrap();
        assert_eq!(again, lenient);
    }

    #[test]
    fn event_wire_spelling() {
        let e = Event::new(
            "s1",
            4,
            1700,
            Phase::Vote,
            EventKind::VoteSet {
                option: "parks".into(),
                old: VoteCount(0),
                new: VoteCount(-2),
                remaining_after: Credits(32),
            },
        );
        assert_eq!(
            e.to_line(),
            r#"{"session_id":"s1","seq":4,"ts_ms":1700,"phase":"vote","kind":"vote_set","option":"parks","old":0,"new":-2,"remaining_after":32}"#
        );
        let d = Event::new(
            "s1",
            5,
            1800,
            Phase::Organize,
            EventKind::DragMove {
                option: "parks".into(),
                from: Slot { category: Category::LeanPositive, index: 0 },
                to: Slot { category: Category::SkippedUndecided, index: 2 },
            },
        );
        assert_eq!(
            d.to_line(),
            r#"{"session_id":"s1","seq":5,"ts_ms":1800,"phase":"organize","kind":"drag_move","option":"parks","from":{"category":"lean_positive","index":0},"to":{"category":"skipped_undecided","index":2}}"#
        );
    }
}
