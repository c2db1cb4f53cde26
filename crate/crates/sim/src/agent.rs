//! Scripted respondents.
//!
//! Every action is built from the live session state and applied before it
//! is recorded, so a simulated log replays by construction.

use std::str::FromStr;

use qs_core::events::{Category, OrgChoice, Slot};
use qs_core::mechanism::vote_cost;
use qs_core::survey::{assign_condition_among, derive_seed, draw_options, rng_from_seed, ArmCounts, SurveyError};
use qs_core::{Condition, Credits, Event, EventKind, Interface, OptionId, Phase, SessionHeader, SessionLog, SessionState,
    SurveyConfig, VoteCount};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentPolicy {
    /// Uniformly random legal actions.
    Uniform,
    /// Large allocations first, then spends what is left in small steps.
    Satisficer,
    /// Walks the list, editing options close to the previous one by at most
    /// two votes at a time, and by one vote near budget exhaustion.
    Deliberator,
}

impl AgentPolicy {
    pub const ALL: [AgentPolicy; 3] = [AgentPolicy::Uniform, AgentPolicy::Satisficer, AgentPolicy::Deliberator];

    pub fn label(self) -> &'static str {
        match self {
            AgentPolicy::Uniform => "uniform",
            AgentPolicy::Satisficer => "satisficer",
            AgentPolicy::Deliberator => "deliberator",
        }
    }
}

impl FromStr for AgentPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentPolicy::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| format!("unknown policy `{s}` (expected uniform, satisficer or deliberator)"))
    }
}

/// Log-normal time between consecutive actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dwell {
    pub median_ms: f64,
    /// Standard deviation of the log dwell time.
    pub log_sd: f64,
}

impl Default for Dwell {
    /// Puts typical six-option sessions near three minutes and 24-option
    /// sessions near ten.
    fn default() -> Self {
        Dwell { median_ms: 7_000.0, log_sd: 0.8 }
    }
}

impl Dwell {
    pub fn mean_ms(&self) -> f64 {
        self.median_ms * (self.log_sd * self.log_sd / 2.0).exp()
    }

    fn distribution(&self) -> Result<LogNormal<f64>, SimError> {
        if !(self.median_ms.is_finite() && self.median_ms > 0.0 && self.log_sd.is_finite() && self.log_sd >= 0.0) {
            return Err(SimError::InvalidDwell(*self));
        }
        LogNormal::new(self.median_ms.ln(), self.log_sd).map_err(|_| SimError::InvalidDwell(*self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub survey: SurveyConfig,
    pub policy: AgentPolicy,
    pub seed: u64,
    #[serde(default)]
    pub dwell: Dwell,
    /// Fixed arm; drawn from the survey's enabled arms when absent.
    #[serde(default)]
    pub condition: Option<Condition>,
    /// Defaults to `sim-<seed in hex>`.
    #[serde(default)]
    pub session_id: Option<String>,
    /// Timestamp of the session start in Unix milliseconds.
    #[serde(default = "default_start_ms")]
    pub start_ms: u64,
}

fn default_start_ms() -> u64 {
    1_700_000_000_000
}

impl SimConfig {
    pub fn new(survey: SurveyConfig, policy: AgentPolicy, seed: u64) -> Self {
        SimConfig {
            survey,
            policy,
            seed,
            dwell: Dwell::default(),
            condition: None,
            session_id: None,
            start_ms: default_start_ms(),
        }
    }

    pub fn with_condition(mut self, condition: Condition) -> Self {
        self.condition = Some(condition);
        self
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error("dwell parameters must be positive and finite: {0:?}")]
    InvalidDwell(Dwell),
    #[error("condition {0} is not enabled for this survey")]
    ConditionNotEnabled(&'static str),
}

// Independent sub-streams of the session seed.
const STREAM_CONDITION: u64 = 1;
const STREAM_OPTIONS: u64 = 2;
const STREAM_DISPLAY: u64 = 3;
const STREAM_AGENT: u64 = 4;

/// Runs one respondent from session start to submission.
pub fn simulate_session(cfg: &SimConfig) -> Result<SessionLog, SimError> {
    cfg.dwell.distribution()?;
    let pool = cfg.survey.pool.resolve(None)?;
    cfg.survey.validate(&pool)?;
    let condition = match cfg.condition {
        Some(c) if cfg.survey.conditions.contains(&c) => c,
        Some(c) => return Err(SimError::ConditionNotEnabled(c.label())),
        None => assign_condition_among(
            &ArmCounts::default(),
            &cfg.survey.conditions,
            derive_seed(cfg.seed, STREAM_CONDITION),
        ),
    };
    let k = cfg.survey.length_for(condition.length);
    let options: Vec<OptionId> = draw_options(&pool, k, derive_seed(cfg.seed, STREAM_OPTIONS))?
        .into_iter()
        .map(|o| o.id)
        .collect();
    let header = SessionHeader {
        session_id: cfg.session_id.clone().unwrap_or_else(|| format!("sim-{:016x}", cfg.seed)),
        survey_id: cfg.survey.survey_id.clone(),
        condition,
        budget: cfg.survey.budget,
        options,
        display_seed: derive_seed(cfg.seed, STREAM_DISPLAY),
        simulated: true,
        created_ms: Some(cfg.start_ms),
    };
    Ok(simulate_with_header(&header, cfg.policy, cfg.seed, cfg.dwell, cfg.start_ms))
}

/// Runs a respondent against an existing session header, such as one issued
/// by the service. `seed` drives only the agent; the header fixes options
/// and display order.
///
/// Panics if `dwell` is invalid.
pub fn simulate_with_header(header: &SessionHeader, policy: AgentPolicy, seed: u64, dwell: Dwell, start_ms: u64) -> SessionLog {
    let dwell = dwell.distribution().expect("valid dwell parameters");
    let mut run = Run {
        state: SessionState::initial(header),
        events: Vec::new(),
        rng: rng_from_seed(derive_seed(seed, STREAM_AGENT)),
        dwell,
        t: start_ms,
        seq: 0,
    };
    let utility = run.utilities(&header.options);
    match policy {
        AgentPolicy::Uniform => run.uniform(),
        AgentPolicy::Satisficer => run.satisficer(&utility),
        AgentPolicy::Deliberator => run.deliberator(&utility),
    }
    run.submit();
    SessionLog { header: header.clone(), events: run.events }
}

/// Simulates sessions in parallel; output order follows `cfgs`.
pub fn simulate_batch(cfgs: &[SimConfig]) -> Result<Vec<SessionLog>, SimError> {
    cfgs.par_iter().map(simulate_session).collect()
}

/// `n` configs cycling through `policies`, with arms assigned block-balanced
/// in session order and per-session seeds derived from `seed`.
pub fn batch_configs(survey: &SurveyConfig, policies: &[AgentPolicy], n: usize, seed: u64, dwell: Dwell) -> Vec<SimConfig> {
    let mut counts = ArmCounts::default();
    (0..n)
        .map(|i| {
            let session_seed = derive_seed(seed, i as u64);
            let condition = assign_condition_among(&counts, &survey.conditions, session_seed);
            counts.increment(condition);
            SimConfig {
                survey: survey.clone(),
                policy: policies[i % policies.len()],
                seed: session_seed,
                dwell,
                condition: Some(condition),
                session_id: Some(format!("sim-{seed:x}-{i:05}")),
                start_ms: default_start_ms(),
            }
        })
        .collect()
}

struct Run {
    state: SessionState,
    events: Vec<Event>,
    rng: ChaCha8Rng,
    dwell: LogNormal<f64>,
    t: u64,
    seq: u64,
}

/// Agent's private opinion of each option, in draw order.
type Utility = Vec<(OptionId, f64)>;

impl Run {
    fn utilities(&mut self, options: &[OptionId]) -> Utility {
        options
            .iter()
            .map(|o| (o.clone(), StandardNormal.sample(&mut self.rng)))
            .collect()
    }

    fn emit(&mut self, kind: EventKind) {
        let dt = self.dwell.sample(&mut self.rng).round().max(1.0) as u64;
        self.t += dt;
        self.seq += 1;
        let event = Event::new(self.state.session_id.clone(), self.seq, self.t, self.state.phase, kind);
        if let Err(e) = self.state.apply(&event) {
            panic!("simulator built an illegal event {event:?}: {e}");
        }
        self.events.push(event);
    }

    /// Emits a vote change if it differs from the current count and fits the
    /// budget.
    fn vote(&mut self, option: &OptionId, new: i64) -> bool {
        let old = self.state.ballot.get(option);
        if old.0 == new {
            return false;
        }
        let Some(remaining_after) = self.state.remaining_if(option, VoteCount(new)) else {
            return false;
        };
        self.emit(EventKind::VoteSet { option: option.clone(), old, new: VoteCount(new), remaining_after });
        true
    }

    fn navigate(&mut self, to: Phase) {
        let from = self.state.phase;
        self.emit(EventKind::PhaseNav { from, to });
    }

    /// Presents and files the option at the front of the queue.
    fn organize_front(&mut self, choose: &mut dyn FnMut(&mut ChaCha8Rng, &OptionId) -> OrgChoice) {
        let Some(option) = self.state.presented().cloned() else {
            return;
        };
        self.emit(EventKind::OrgPresent { option: option.clone() });
        let choice = choose(&mut self.rng, &option);
        self.emit(EventKind::OrgCategorize { option, choice });
    }

    /// One pass over the queue, then on to voting.
    fn organize(&mut self, choose: &mut dyn FnMut(&mut ChaCha8Rng, &OptionId) -> OrgChoice) {
        if self.state.interface() != Interface::TwoPhase {
            return;
        }
        for _ in 0..self.state.options.len() {
            self.organize_front(choose);
        }
    }

    fn random_drag(&mut self) {
        let in_vote = self.state.phase == Phase::Vote;
        let sources: Vec<Category> = Category::ORDER
            .into_iter()
            .filter(|c| !self.state.category(*c).is_empty())
            .collect();
        let Some(&from_cat) = sources.choose(&mut self.rng) else {
            return;
        };
        let from_index = self.rng.random_range(0..self.state.category(from_cat).len());
        let option = self.state.category(from_cat)[from_index].clone();
        let targets: Vec<Category> = Category::ORDER
            .into_iter()
            .filter(|c| !(in_vote && *c == Category::SkippedUndecided && from_cat != Category::SkippedUndecided))
            .collect();
        let to_cat = *targets.choose(&mut self.rng).expect("lean categories are always targets");
        let len = self.state.category(to_cat).len() - usize::from(to_cat == from_cat);
        let to_index = self.rng.random_range(0..=len);
        self.emit(EventKind::DragMove {
            option,
            from: Slot { category: from_cat, index: from_index },
            to: Slot { category: to_cat, index: to_index },
        });
    }

    fn uniform(&mut self) {
        let two_phase = self.state.interface() == Interface::TwoPhase;
        self.organize(&mut |rng, _| {
            *[OrgChoice::LeanPositive, OrgChoice::LeanNeutral, OrgChoice::LeanNegative, OrgChoice::Skip]
                .choose(rng)
                .expect("non-empty")
        });
        if two_phase {
            for _ in 0..self.rng.random_range(0..3) {
                self.random_drag();
            }
            self.navigate(Phase::Vote);
        }
        let n = self.state.options.len();
        let steps = self.rng.random_range(n..=3 * n);
        for _ in 0..steps {
            let roll: f64 = self.rng.random();
            if two_phase && roll < 0.08 {
                self.random_drag();
            } else if two_phase && roll < 0.12 {
                let category = *Category::ORDER.choose(&mut self.rng).expect("non-empty");
                self.emit(EventKind::SortCategory { category });
            } else if two_phase && roll < 0.14 {
                // Back to the stack for one card, then return.
                self.navigate(Phase::Organize);
                self.organize_front(&mut |rng, _| {
                    *[OrgChoice::LeanPositive, OrgChoice::LeanNeutral, OrgChoice::LeanNegative]
                        .choose(rng)
                        .expect("non-empty")
                });
                self.navigate(Phase::Vote);
            } else {
                let option = self.state.options.choose(&mut self.rng).expect("non-empty").clone();
                let current = self.state.ballot.get(&option);
                let choices: Vec<VoteCount> = self
                    .state
                    .affordable(&option)
                    .expect("option belongs to the session")
                    .into_iter()
                    .map(|a| a.votes)
                    .filter(|v| *v != current)
                    .collect();
                if let Some(v) = choices.choose(&mut self.rng) {
                    self.vote(&option, v.0);
                }
            }
        }
    }

    fn lean_by_utility(utility: &Utility) -> impl FnMut(&mut ChaCha8Rng, &OptionId) -> OrgChoice + '_ {
        move |rng, option| {
            if rng.random::<f64>() < 0.1 {
                return OrgChoice::Skip;
            }
            match utility_of(utility, option) {
                u if u > 0.5 => OrgChoice::LeanPositive,
                u if u < -0.5 => OrgChoice::LeanNegative,
                _ => OrgChoice::LeanNeutral,
            }
        }
    }

    fn layout(&self) -> Vec<OptionId> {
        self.state.layout().into_iter().cloned().collect()
    }

    fn satisficer(&mut self, utility: &Utility) {
        let two_phase = self.state.interface() == Interface::TwoPhase;
        self.organize(&mut Self::lean_by_utility(utility));
        if two_phase {
            self.navigate(Phase::Vote);
        }
        let budget = self.state.budget.0;
        // Front-load: big chunks in layout order while a quarter of the
        // budget is still free.
        for option in self.layout() {
            let remaining = self.state.remaining().0;
            if remaining * 4 <= budget {
                break;
            }
            let fraction = self.rng.random_range(0.3..0.6);
            let magnitude = ((remaining as f64 * fraction).sqrt().floor() as i64).max(1);
            self.vote(&option, direction(utility_of(utility, &option)) * magnitude);
        }
        // Spend the rest one vote at a time, top of the list first.
        for _ in 0..4 * self.state.options.len() {
            let layout = self.layout();
            let Some(option) = layout.iter().find(|o| {
                let v = self.state.ballot.get(o).0;
                let next = if v == 0 { direction(utility_of(utility, o)) } else { v + v.signum() };
                self.state.remaining_if(o, VoteCount(next)).is_some()
            }) else {
                break;
            };
            let v = self.state.ballot.get(option).0;
            let next = if v == 0 { direction(utility_of(utility, option)) } else { v + v.signum() };
            let option = option.clone();
            self.vote(&option, next);
        }
        if two_phase && self.rng.random::<f64>() < 0.5 {
            self.emit(EventKind::SortCategory { category: Category::LeanPositive });
        }
    }

    fn deliberator(&mut self, utility: &Utility) {
        let two_phase = self.state.interface() == Interface::TwoPhase;
        self.organize(&mut Self::lean_by_utility(utility));
        if two_phase {
            self.navigate(Phase::Vote);
        }
        let budget = self.state.budget;
        let target = target_ballot(utility, budget);
        let layout = self.layout();
        let goal: Vec<i64> = layout
            .iter()
            .map(|o| target[utility.iter().position(|(id, _)| id == o).expect("layout holds session options")])
            .collect();
        let mut cursor = 0usize;
        // Votes move monotonically from 0 towards a target whose total cost
        // fits the budget, so every step is affordable.
        for _ in 0..8 * layout.len() {
            let pending = |p: usize| self.state.ballot.get(&layout[p]).0 != goal[p];
            let near = (0..layout.len())
                .filter(|p| pending(*p))
                .min_by_key(|p| (p.abs_diff(cursor), *p < cursor));
            let Some(p) = near else {
                break;
            };
            let current = self.state.ballot.get(&layout[p]).0;
            let gap = goal[p] - current;
            let tight = self.state.remaining().0 * 5 < budget.0;
            let step = if tight { 1 } else { gap.abs().min(self.rng.random_range(1..=2)) };
            let moved = self.vote(&layout[p], current + gap.signum() * step);
            debug_assert!(moved, "monotone steps towards an affordable target are always legal");
            cursor = p;
        }
    }

    fn submit(&mut self) {
        if self.state.phase != Phase::Vote {
            self.navigate(Phase::Vote);
        }
        let ballot = self.state.ballot.clone();
        self.emit(EventKind::Submit { ballot });
    }
}

fn utility_of(utility: &Utility, option: &OptionId) -> f64 {
    utility.iter().find(|(o, _)| o == option).map_or(0.0, |(_, u)| *u)
}

fn direction(u: f64) -> i64 {
    if u < 0.0 {
        -1
    } else {
        1
    }
}

/// Integer votes proportional to utility, scaled to use most of the budget.
fn target_ballot(utility: &Utility, budget: Credits) -> Vec<i64> {
    let ss: f64 = utility.iter().map(|(_, u)| u * u).sum();
    if ss == 0.0 {
        return vec![0; utility.len()];
    }
    let scale = (budget.0 as f64 / ss).sqrt();
    let mut t: Vec<i64> = utility.iter().map(|(_, u)| (scale * u).round() as i64).collect();
    let cost = |t: &[i64]| t.iter().map(|v| vote_cost(VoteCount(*v)).0).sum::<u64>();
    while cost(&t) > budget.0 {
        let (i, _) = t.iter().enumerate().max_by_key(|(_, v)| v.abs()).expect("non-empty");
        t[i] -= t[i].signum();
    }
    t
}
