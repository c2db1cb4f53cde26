//! Survey administration independent of the transport.
//!
//! Locking: the survey table lock is taken before the session table lock,
//! and a session's own lock is only taken after the table locks are
//! released. Each session has a single writer at a time.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use qs_core::events::{ParseMode, ReplayError};
use qs_core::mechanism::{tally, Ballot, TallyResult};
use qs_core::metrics::{session_metrics, write_actions_csv, write_metrics_csv};
use qs_core::survey::{assign_condition_among, derive_seed, draw_options, ArmCounts, OptionSpec, PoolRef, SurveyError};
use qs_core::{Condition, Credits, Event, EventKind, IllegalEvent, Interface, OptionId, SessionHeader, SessionLog,
    SessionState, SurveyConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clock::Clock;
use crate::store::{Registry, RegistryEntry, Store, StoreError, SurveyStatus};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown survey `{0}`")]
    UnknownSurvey(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("survey `{0}` already exists")]
    DuplicateSurvey(String),
    #[error("survey `{0}` is closed")]
    SurveyClosed(String),
    #[error(transparent)]
    InvalidSurvey(#[from] SurveyError),
    #[error("session `{0}` is already submitted")]
    SessionSubmitted(String),
    #[error("session `{0}` was abandoned")]
    SessionAbandoned(String),
    #[error(transparent)]
    Illegal(IllegalEvent),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Storage(#[from] StoreError),
    #[error("stored session `{session}` does not replay: {error}")]
    CorruptSession { session: String, error: ReplayError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Submitted,
    Abandoned,
}

/// What a respondent's client needs to render and resume a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPayload {
    pub session_id: String,
    pub survey_id: String,
    pub prompt: String,
    pub condition: Condition,
    pub condition_label: String,
    pub interface: Interface,
    pub budget: Credits,
    /// Drawn options in draw order.
    pub options: Vec<OptionSpec>,
    /// Initial on-screen order.
    pub display_order: Vec<OptionId>,
    pub display_seed: u64,
    pub status: SessionStatus,
    /// Accepted events so far, for client-side replay after a reload.
    pub events: Vec<Event>,
    pub next_seq: u64,
    pub ballot: Ballot,
    pub remaining: Credits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub index: usize,
    pub seq: u64,
    pub claimed: Credits,
    pub corrected: Credits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum RejectReason {
    Malformed { message: String },
    Illegal { error: IllegalEvent, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    /// Events newly appended to the log.
    pub accepted: usize,
    /// Resent events identical to ones already stored; skipped.
    pub duplicates: usize,
    /// VoteSets whose `remaining_after` was recomputed server-side.
    pub corrections: Vec<Correction>,
    pub last_seq: Option<u64>,
    pub remaining: Credits,
    pub submitted: bool,
    pub rejection: Option<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub ballot: Ballot,
    #[serde(default)]
    pub seq: Option<u64>,
    #[serde(default)]
    pub ts_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub session_id: String,
    pub seq: u64,
    pub ballot: Ballot,
    pub remaining: Credits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportKind {
    Events,
    Metrics,
    Actions,
    Tally,
}

impl std::str::FromStr for ExportKind {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "events" => Ok(ExportKind::Events),
            "metrics" => Ok(ExportKind::Metrics),
            "actions" => Ok(ExportKind::Actions),
            "tally" => Ok(ExportKind::Tally),
            other => Err(ServiceError::BadRequest(format!(
                "unknown export `{other}` (expected events, metrics, actions or tally)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyExport {
    pub survey_id: String,
    /// Submitted sessions counted.
    pub sessions: usize,
    pub totals: TallyResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Export {
    pub content_type: &'static str,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySummary {
    pub survey_id: String,
    pub status: SurveyStatus,
    pub arm_counts: ArmCounts,
    pub sessions: usize,
}

struct SurveyEntry {
    config: SurveyConfig,
    pool: Vec<OptionSpec>,
    status: SurveyStatus,
    counts: ArmCounts,
    /// Session ids in creation order.
    sessions: Vec<String>,
}

struct LiveSession {
    header: SessionHeader,
    prompt: String,
    option_specs: Vec<OptionSpec>,
    state: SessionState,
    events: Vec<Event>,
    last_activity_ms: u64,
}

pub struct Service {
    store: Store,
    clock: Arc<dyn Clock>,
    ttl_ms: u64,
    surveys: Mutex<BTreeMap<String, SurveyEntry>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
}

// Sub-streams of a session's seed.
const STREAM_CONDITION: u64 = 1;
const STREAM_OPTIONS: u64 = 2;
const STREAM_DISPLAY: u64 = 3;
const STREAM_ID: u64 = 4;

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl Service {
    /// Opens the store at `root` and rebuilds every session by replaying
    /// its log. A torn final line left by a crash is cut off first.
    pub fn open(root: impl AsRef<Path>, clock: Arc<dyn Clock>, ttl_secs: u64) -> Result<Self, ServiceError> {
        let store = Store::open(root.as_ref())?;
        let registry = store.load_registry()?;
        let mut surveys = BTreeMap::new();
        for entry in registry.surveys {
            let pool = entry.config.pool.resolve(Some(store.root()))?;
            surveys.insert(
                entry.config.survey_id.clone(),
                SurveyEntry {
                    config: entry.config,
                    pool,
                    status: entry.status,
                    counts: ArmCounts::default(),
                    sessions: Vec::new(),
                },
            );
        }
        let now = clock.now_ms();
        let mut sessions = HashMap::new();
        let mut loaded: Vec<(u64, String, String)> = Vec::new();
        for id in store.session_ids()? {
            let torn = store.repair_session(&id)?;
            if torn > 0 {
                tracing::warn!(session = %id, bytes = torn, "dropped torn trailing line");
            }
            let log = store.read_session(&id)?;
            let Some(survey) = surveys.get(&log.header.survey_id) else {
                tracing::warn!(session = %id, survey = %log.header.survey_id, "session of unknown survey ignored");
                continue;
            };
            let state = qs_core::events::replay(&log.header, &log.events)
                .map_err(|error| ServiceError::CorruptSession { session: id.clone(), error })?;
            let last_activity_ms = log
                .events
                .iter()
                .filter_map(|e| e.received_ms)
                .chain(log.header.created_ms)
                .max()
                .unwrap_or(now);
            let live = LiveSession {
                prompt: survey.config.prompt.clone(),
                option_specs: specs_for(&survey.pool, &log.header.options),
                header: log.header.clone(),
                state,
                events: log.events,
                last_activity_ms,
            };
            loaded.push((log.header.created_ms.unwrap_or(0), id.clone(), log.header.survey_id.clone()));
            sessions.insert(id, Arc::new(Mutex::new(live)));
        }
        loaded.sort();
        for (_, id, survey_id) in loaded {
            let entry = surveys.get_mut(&survey_id).expect("filtered above");
            let condition = lock(&sessions[&id]).header.condition;
            entry.counts.increment(condition);
            entry.sessions.push(id);
        }
        let service = Service {
            store,
            clock,
            ttl_ms: ttl_secs.saturating_mul(1000),
            surveys: Mutex::new(surveys),
            sessions: RwLock::new(sessions),
        };
        service.save_registry(&lock(&service.surveys))?;
        Ok(service)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn save_registry(&self, surveys: &BTreeMap<String, SurveyEntry>) -> Result<(), StoreError> {
        self.store.save_registry(&Registry {
            surveys: surveys
                .values()
                .map(|s| RegistryEntry {
                    config: s.config.clone(),
                    status: s.status,
                    arm_counts: s.counts,
                })
                .collect(),
        })
    }

    /// Registers a survey. File pools are resolved against the storage root
    /// and stored inline, so the survey no longer depends on the file.
    pub fn create_survey(&self, mut config: SurveyConfig) -> Result<String, ServiceError> {
        let pool = config.pool.resolve(Some(self.store.root()))?;
        config.validate(&pool)?;
        config.pool = PoolRef::Options(pool.clone());
        let mut surveys = lock(&self.surveys);
        if surveys.contains_key(&config.survey_id) {
            return Err(ServiceError::DuplicateSurvey(config.survey_id));
        }
        let id = config.survey_id.clone();
        surveys.insert(
            id.clone(),
            SurveyEntry {
                config,
                pool,
                status: SurveyStatus::Open,
                counts: ArmCounts::default(),
                sessions: Vec::new(),
            },
        );
        if let Err(e) = self.save_registry(&surveys) {
            surveys.remove(&id);
            return Err(e.into());
        }
        Ok(id)
    }

    pub fn close_survey(&self, survey_id: &str) -> Result<(), ServiceError> {
        let mut surveys = lock(&self.surveys);
        let entry = surveys
            .get_mut(survey_id)
            .ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
        entry.status = SurveyStatus::Closed;
        self.save_registry(&surveys)?;
        Ok(())
    }

    pub fn survey_summary(&self, survey_id: &str) -> Result<SurveySummary, ServiceError> {
        let surveys = lock(&self.surveys);
        let s = surveys
            .get(survey_id)
            .ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
        Ok(SurveySummary {
            survey_id: survey_id.into(),
            status: s.status,
            arm_counts: s.counts,
            sessions: s.sessions.len(),
        })
    }

    /// Starts a session: assigns the least-filled arm, draws options and a
    /// display order, and persists the header before returning.
    pub fn open_session(&self, survey_id: &str) -> Result<SessionPayload, ServiceError> {
        let mut surveys = lock(&self.surveys);
        let entry = surveys
            .get_mut(survey_id)
            .ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
        if entry.status == SurveyStatus::Closed {
            return Err(ServiceError::SurveyClosed(survey_id.into()));
        }
        let index = entry.sessions.len() as u64;
        let seed = derive_seed(entry.config.seed, index);
        let condition = assign_condition_among(&entry.counts, &entry.config.conditions, derive_seed(seed, STREAM_CONDITION));
        let k = entry.config.length_for(condition.length);
        let drawn = draw_options(&entry.pool, k, derive_seed(seed, STREAM_OPTIONS))?;
        let header = SessionHeader {
            session_id: format!("{survey_id}-{index:05}-{:08x}", derive_seed(seed, STREAM_ID) as u32),
            survey_id: survey_id.into(),
            condition,
            budget: entry.config.budget,
            options: drawn.iter().map(|o| o.id.clone()).collect(),
            display_seed: derive_seed(seed, STREAM_DISPLAY),
            simulated: false,
            created_ms: Some(self.clock.now_ms()),
        };
        self.store.create_session(&header)?;
        entry.counts.increment(condition);
        entry.sessions.push(header.session_id.clone());
        let live = LiveSession {
            state: SessionState::initial(&header),
            prompt: entry.config.prompt.clone(),
            option_specs: drawn,
            last_activity_ms: header.created_ms.unwrap_or(0),
            events: Vec::new(),
            header,
        };
        let payload = self.payload(&live);
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(live.header.session_id.clone(), Arc::new(Mutex::new(live)));
        // The session file is already durable; a failed registry write is
        // repaired from session files on the next start.
        if let Err(e) = self.save_registry(&surveys) {
            tracing::error!(error = %e, "registry write failed after session creation");
        }
        Ok(payload)
    }

    fn session(&self, session_id: &str) -> Result<Arc<Mutex<LiveSession>>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.into()))
    }

    fn status(&self, live: &LiveSession) -> SessionStatus {
        if live.state.submitted {
            SessionStatus::Submitted
        } else if self.clock.now_ms().saturating_sub(live.last_activity_ms) > self.ttl_ms {
            SessionStatus::Abandoned
        } else {
            SessionStatus::Active
        }
    }

    fn payload(&self, live: &LiveSession) -> SessionPayload {
        let h = &live.header;
        SessionPayload {
            session_id: h.session_id.clone(),
            survey_id: h.survey_id.clone(),
            prompt: live.prompt.clone(),
            condition: h.condition,
            condition_label: h.condition.label().into(),
            interface: h.interface(),
            budget: h.budget,
            options: live.option_specs.clone(),
            display_order: h.display_order(),
            display_seed: h.display_seed,
            status: self.status(live),
            events: live.events.clone(),
            next_seq: live.state.last_seq.map_or(1, |s| s + 1),
            ballot: live.state.ballot.clone(),
            remaining: live.state.remaining(),
        }
    }

    /// Current session payload, including its accepted events.
    pub fn bootstrap(&self, session_id: &str) -> Result<SessionPayload, ServiceError> {
        let live = self.session(session_id)?;
        let live = lock(&live);
        Ok(self.payload(&live))
    }

    /// Replayed state of a session.
    pub fn session_state(&self, session_id: &str) -> Result<SessionState, ServiceError> {
        let live = self.session(session_id)?;
        let state = lock(&live).state.clone();
        Ok(state)
    }

    fn require_writable(&self, live: &LiveSession) -> Result<(), ServiceError> {
        match self.status(live) {
            SessionStatus::Active => Ok(()),
            SessionStatus::Submitted => Err(ServiceError::SessionSubmitted(live.header.session_id.clone())),
            SessionStatus::Abandoned => Err(ServiceError::SessionAbandoned(live.header.session_id.clone())),
        }
    }

    /// Validates a batch in order and durably appends its legal prefix.
    ///
    /// A `VoteSet` whose only fault is a wrong `remaining_after` is corrected
    /// and reported rather than rejected. An event repeating an already
    /// stored seq with identical content is skipped, which makes client
    /// retries idempotent.
    pub fn ingest(&self, session_id: &str, batch: Vec<Value>) -> Result<IngestOutcome, ServiceError> {
        let live = self.session(session_id)?;
        let mut live = lock(&live);
        self.require_writable(&live)?;
        let now = self.clock.now_ms();
        let mut trial = live.state.clone();
        let mut accepted: Vec<Event> = Vec::new();
        let mut duplicates = 0;
        let mut corrections = Vec::new();
        let mut rejection = None;
        for (index, value) in batch.into_iter().enumerate() {
            let mut event = match Event::from_value(value, ParseMode::Strict, index) {
                Ok(e) => e,
                Err(e) => {
                    rejection = Some(Rejection { index, reason: RejectReason::Malformed { message: e.to_string() } });
                    break;
                }
            };
            if trial.last_seq.is_some_and(|last| event.seq <= last) {
                let stored = live.events.iter().chain(&accepted).find(|e| e.seq == event.seq);
                if stored.is_some_and(|s| same_content(s, &event)) {
                    duplicates += 1;
                    continue;
                }
            }
            if let EventKind::VoteSet { option, new, remaining_after, .. } = &mut event.kind {
                if let Some(expected) = trial.remaining_if(option, *new) {
                    if expected != *remaining_after {
                        corrections.push(Correction {
                            index,
                            seq: event.seq,
                            claimed: *remaining_after,
                            corrected: expected,
                        });
                        *remaining_after = expected;
                    }
                }
            }
            event.received_ms = Some(now);
            if let Err(error) = trial.apply(&event) {
                if corrections.last().is_some_and(|c| c.index == index) {
                    corrections.pop();
                }
                let message = error.to_string();
                rejection = Some(Rejection { index, reason: RejectReason::Illegal { error, message } });
                break;
            }
            accepted.push(event);
        }
        if !accepted.is_empty() {
            self.store.append_events(session_id, &accepted)?;
            live.events.extend(accepted.iter().cloned());
            live.state = trial;
            live.last_activity_ms = now;
        }
        for c in &corrections {
            tracing::warn!(session = %session_id, seq = c.seq, claimed = c.claimed.0, corrected = c.corrected.0,
                "corrected remaining_after");
        }
        Ok(IngestOutcome {
            accepted: accepted.len(),
            duplicates,
            corrections,
            last_seq: live.state.last_seq,
            remaining: live.state.remaining(),
            submitted: live.state.submitted,
            rejection,
        })
    }

    /// Seals the session with `ballot`, which must equal the replayed one.
    pub fn submit(&self, session_id: &str, req: SubmitRequest) -> Result<SubmitOutcome, ServiceError> {
        let live = self.session(session_id)?;
        let mut live = lock(&live);
        self.require_writable(&live)?;
        let now = self.clock.now_ms();
        let seq = req.seq.unwrap_or_else(|| live.state.last_seq.map_or(1, |s| s + 1));
        let ts_ms = req.ts_ms.unwrap_or(now);
        let mut event = Event::new(session_id, seq, ts_ms, live.state.phase, EventKind::Submit { ballot: req.ballot });
        event.received_ms = Some(now);
        let mut next = live.state.clone();
        next.apply(&event).map_err(ServiceError::Illegal)?;
        self.store.append_events(session_id, std::slice::from_ref(&event))?;
        live.events.push(event);
        live.state = next;
        live.last_activity_ms = now;
        Ok(SubmitOutcome {
            session_id: session_id.into(),
            seq,
            ballot: live.state.ballot.clone(),
            remaining: live.state.remaining(),
        })
    }

    /// Builds an export from the stored logs alone.
    pub fn export(&self, survey_id: &str, what: ExportKind) -> Result<Export, ServiceError> {
        let (ids, pool) = {
            let surveys = lock(&self.surveys);
            let s = surveys
                .get(survey_id)
                .ok_or_else(|| ServiceError::UnknownSurvey(survey_id.into()))?;
            (s.sessions.clone(), s.pool.iter().map(|o| o.id.clone()).collect::<Vec<_>>())
        };
        let logs = ids
            .iter()
            .map(|id| self.store.read_session(id))
            .collect::<Result<Vec<SessionLog>, _>>()?;
        let csv_err = |e: csv::Error| ServiceError::BadRequest(format!("csv: {e}"));
        Ok(match what {
            ExportKind::Events => Export {
                content_type: "application/x-ndjson",
                body: logs.iter().map(SessionLog::to_jsonl).collect(),
            },
            ExportKind::Metrics | ExportKind::Actions => {
                let metrics = logs
                    .iter()
                    .map(|log| {
                        session_metrics(log).map_err(|error| ServiceError::CorruptSession {
                            session: log.header.session_id.clone(),
                            error,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let mut buf = Vec::new();
                if what == ExportKind::Metrics {
                    write_metrics_csv(&metrics, &mut buf).map_err(csv_err)?;
                } else {
                    write_actions_csv(&metrics, &mut buf).map_err(csv_err)?;
                }
                Export {
                    content_type: "text/csv",
                    body: String::from_utf8(buf).expect("csv output is UTF-8"),
                }
            }
            ExportKind::Tally => {
                let sealed: Vec<Ballot> = logs
                    .iter()
                    .filter_map(|log| {
                        log.events.iter().rev().find_map(|e| match &e.kind {
                            EventKind::Submit { ballot } => Some(ballot.clone()),
                            _ => None,
                        })
                    })
                    .collect();
                let out = TallyExport {
                    survey_id: survey_id.into(),
                    sessions: sealed.len(),
                    totals: tally(&pool, &sealed),
                };
                Export {
                    content_type: "application/json",
                    body: serde_json::to_string(&out).expect("tally serializes"),
                }
            }
        })
    }
}

fn specs_for(pool: &[OptionSpec], ids: &[OptionId]) -> Vec<OptionSpec> {
    ids.iter()
        .map(|id| {
            pool.iter().find(|o| &o.id == id).cloned().unwrap_or_else(|| OptionSpec {
                id: id.clone(),
                title: id.as_str().into(),
                description: String::new(),
            })
        })
        .collect()
}

/// Equal apart from the server receipt time.
fn same_content(stored: &Event, resent: &Event) -> bool {
    let mut a = stored.clone();
    let mut b = resent.clone();
    a.received_ms = None;
    b.received_ms = None;
    if let (EventKind::VoteSet { remaining_after: x, .. }, EventKind::VoteSet { remaining_after: y, .. }) =
        (&mut a.kind, &mut b.kind)
    {
        // A stored VoteSet may carry a corrected value.
        *y = *x;
    }
    a == b
}
