//! Survey definitions, the option pool, condition assignment and all seeded
//! randomization.
//!
//! Every randomized operation here is a pure function of its inputs and a
//! 64-bit seed, so a recorded seed is enough to replay any draw.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{Credits, OptionId};

const DEFAULT_POOL: &str = include_str!("../data/default_pool.jsonl");

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("pool is empty")]
    EmptyPool,
    #[error("pool line {line}: {message}")]
    MalformedPool { line: usize, message: String },
    #[error("duplicate option title `{0}`")]
    DuplicateTitle(String),
    #[error("duplicate option id `{0}`")]
    DuplicateId(String),
    #[error("cannot draw {k} options from a pool of {pool}")]
    DrawOutOfRange { k: usize, pool: usize },
    #[error("invalid survey config: {0}")]
    InvalidConfig(String),
    #[error("reading pool file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One selectable option of a survey.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub id: OptionId,
    pub title: String,
    pub description: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolRecord {
    #[serde(default)]
    id: Option<String>,
    title: String,
    description: String,
}

/// Lowercases and joins alphanumeric runs with `-`.
pub fn slugify(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    let mut pending_dash = false;
    for c in title.chars() {
        if c.is_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.extend(c.to_lowercase());
        } else {
            pending_dash = true;
        }
    }
    out
}

/// Parses a pool file: UTF-8, one JSON object per non-blank line with
/// `title`, `description` and an optional `id` (slug of the title when absent).
pub fn load_pool(source: &str) -> Result<Vec<OptionSpec>, SurveyError> {
    let mut options = Vec::new();
    let mut titles = HashSet::new();
    let mut ids = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| SurveyError::MalformedPool { line: i + 1, message };
        let record: PoolRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let title = record.title.trim().to_owned();
        let description = record.description.trim().to_owned();
        if title.is_empty() || description.is_empty() {
            return Err(malformed("title and description must be non-empty".into()));
        }
        let id = record.id.unwrap_or_else(|| slugify(&title));
        if id.is_empty() {
            return Err(malformed("option id is empty".into()));
        }
        if !titles.insert(title.clone()) {
            return Err(SurveyError::DuplicateTitle(title));
        }
        if !ids.insert(id.clone()) {
            return Err(SurveyError::DuplicateId(id));
        }
        options.push(OptionSpec { id: OptionId(id), title, description });
    }
    if options.is_empty() {
        return Err(SurveyError::EmptyPool);
    }
    Ok(options)
}

/// The bundled 31-topic societal-issue pool.
pub fn default_pool() -> Vec<OptionSpec> {
    load_pool(DEFAULT_POOL).expect("bundled pool is valid")
}

pub fn load_pool_file(path: &Path) -> Result<Vec<OptionSpec>, SurveyError> {
    let text = std::fs::read_to_string(path).map_err(|source| SurveyError::Io {
        path: path.to_owned(),
        source,
    })?;
    load_pool(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interface {
    Text,
    TwoPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthArm {
    Short,
    Long,
}

/// One of the four between-subject study groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub length: LengthArm,
    pub interface: Interface,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition { length: LengthArm::Short, interface: Interface::Text },
        Condition { length: LengthArm::Short, interface: Interface::TwoPhase },
        Condition { length: LengthArm::Long, interface: Interface::Text },
        Condition { length: LengthArm::Long, interface: Interface::TwoPhase },
    ];

    pub fn index(self) -> usize {
        let l = match self.length {
            LengthArm::Short => 0,
            LengthArm::Long => 2,
        };
        let i = match self.interface {
            Interface::Text => 0,
            Interface::TwoPhase => 1,
        };
        l + i
    }

    /// `0` for short, `1` for long.
    pub fn length_code(self) -> usize {
        self.index() / 2
    }

    /// `0` for text, `1` for two-phase.
    pub fn interface_code(self) -> usize {
        self.index() % 2
    }

    pub fn label(self) -> &'static str {
        ["short_text", "short_two_phase", "long_text", "long_two_phase"][self.index()]
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Condition {
    type Err = SurveyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| SurveyError::InvalidConfig(format!("unknown condition `{s}`")))
    }
}

/// Where a survey's option pool comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolRef {
    #[default]
    Default,
    File(PathBuf),
    Options(Vec<OptionSpec>),
}

impl PoolRef {
    /// Resolves the pool; relative file paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<Vec<OptionSpec>, SurveyError> {
        match self {
            PoolRef::Default => Ok(default_pool()),
            PoolRef::File(path) => {
                let path = match base_dir {
                    Some(base) if path.is_relative() => base.join(path),
                    _ => path.clone(),
                };
                load_pool_file(&path)
            }
            PoolRef::Options(options) => {
                let text = options
                    .iter()
                    .map(|o| {
                        serde_json::json!({"id": o.id, "title": o.title, "description": o.description})
                            .to_string()
                    })
                    .collect::<Vec<_>>()
                    .join("\n");
                load_pool(&text)
            }
        }
    }
}

fn default_short() -> usize {
    6
}

fn default_long() -> usize {
    24
}

fn all_conditions() -> Vec<Condition> {
    Condition::ALL.to_vec()
}

/// A survey as registered with the service or handed to the simulator.
///
/// The credit budget has no default and must always be given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyConfig {
    pub survey_id: String,
    pub prompt: String,
    pub budget: Credits,
    #[serde(default = "default_short")]
    pub short_length: usize,
    #[serde(default = "default_long")]
    pub long_length: usize,
    #[serde(default)]
    pub pool: PoolRef,
    pub seed: u64,
    /// Arms sessions may be assigned to.
    #[serde(default = "all_conditions")]
    pub conditions: Vec<Condition>,
}

impl SurveyConfig {
    pub fn length_for(&self, arm: LengthArm) -> usize {
        match arm {
            LengthArm::Short => self.short_length,
            LengthArm::Long => self.long_length,
        }
    }

    /// Checks the config against its resolved pool.
    pub fn validate(&self, pool: &[OptionSpec]) -> Result<(), SurveyError> {
        let invalid = |m: &str| Err(SurveyError::InvalidConfig(m.to_owned()));
        if self.survey_id.is_empty()
            || !self
                .survey_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return invalid("survey_id must be non-empty and contain only [A-Za-z0-9_-]");
        }
        if self.prompt.trim().is_empty() {
            return invalid("prompt must be non-empty");
        }
        if self.budget.0 == 0 {
            return invalid("budget must be positive");
        }
        if self.conditions.is_empty() {
            return invalid("at least one condition must be enabled");
        }
        for c in &self.conditions {
            let len = self.length_for(c.length);
            if len == 0 {
                return invalid("survey lengths must be positive");
            }
            if len > pool.len() {
                return Err(SurveyError::InvalidConfig(format!(
                    "{} length {len} exceeds pool size {}",
                    c.length_label(),
                    pool.len()
                )));
            }
        }
        Ok(())
    }
}

impl Condition {
    fn length_label(self) -> &'static str {
        match self.length {
            LengthArm::Short => "short",
            LengthArm::Long => "long",
        }
    }
}

/// SplitMix64 finalizer; derives independent sub-seeds from a base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample of `k` options without replacement, in draw order.
pub fn draw_options(pool: &[OptionSpec], k: usize, seed: u64) -> Result<Vec<OptionSpec>, SurveyError> {
    if k == 0 || k > pool.len() {
        return Err(SurveyError::DrawOutOfRange { k, pool: pool.len() });
    }
    let mut rng = rng_from_seed(seed);
    Ok(index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Uniform random permutation of `0..n`; entry `p` is the index of the
/// option displayed at position `p`.
pub fn shuffle_display(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    order
}

/// Sessions started so far in each arm, indexed by [`Condition::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCounts(pub [u64; 4]);

impl ArmCounts {
    pub fn get(&self, c: Condition) -> u64 {
        self.0[c.index()]
    }

    pub fn increment(&mut self, c: Condition) {
        self.0[c.index()] += 1;
    }
}

/// Block-balanced assignment over all four arms.
pub fn assign_condition(counts: &ArmCounts, seed: u64) -> Condition {
    assign_condition_among(counts, &Condition::ALL, seed)
}

/// Picks uniformly among the enabled arms whose current count is minimal.
///
/// `arms` must be non-empty.
pub fn assign_condition_among(counts: &ArmCounts, arms: &[Condition], seed: u64) -> Condition {
    let min = arms.iter().map(|c| counts.get(*c)).min().expect("no arms enabled");
    let mut candidates: Vec<Condition> = arms.iter().copied().filter(|c| counts.get(*c) == min).collect();
    candidates.sort();
    candidates.dedup();
    let pick = rng_from_seed(seed).random_range(0..candidates.len());
    candidates[pick]
}
