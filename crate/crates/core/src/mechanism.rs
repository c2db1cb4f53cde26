//! The quadratic mechanism: vote costs, budget accounting, ballot validation
//! and tallying.
//!
//! Casting `n` votes on an option (for or against) costs `n²` credits. A ballot
//! is valid when the summed cost of all its entries does not exceed the budget.
//! All arithmetic is exact integer arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stable identifier of a survey option.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OptionId(pub String);

impl OptionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for OptionId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Signed number of votes on one option; negative values are votes against.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct VoteCount(pub i64);

impl VoteCount {
    pub const ZERO: VoteCount = VoteCount(0);

    pub fn magnitude(self) -> u64 {
        self.0.unsigned_abs()
    }
}

impl fmt::Display for VoteCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

/// A quantity of budget credits.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Credits(pub u64);

impl fmt::Display for Credits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Cost of casting `n` votes on a single option.
pub fn vote_cost(n: VoteCount) -> Credits {
    let m = n.magnitude();
    Credits(m * m)
}

/// Cost of moving from `|n|` to `|n| + 1` votes on one option: `2|n| + 1`.
pub fn marginal_cost(n: VoteCount) -> Credits {
    Credits(2 * n.magnitude() + 1)
}

/// A respondent's vote allocation. Absent options hold zero votes.
///
/// Zero entries are never stored, so two ballots with the same effective
/// allocation compare equal and serialize identically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<OptionId, VoteCount>", into = "BTreeMap<OptionId, VoteCount>")]
pub struct Ballot {
    votes: BTreeMap<OptionId, VoteCount>,
}

impl From<BTreeMap<OptionId, VoteCount>> for Ballot {
    fn from(mut votes: BTreeMap<OptionId, VoteCount>) -> Self {
        votes.retain(|_, v| v.0 != 0);
        Self { votes }
    }
}

impl From<Ballot> for BTreeMap<OptionId, VoteCount> {
    fn from(b: Ballot) -> Self {
        b.votes
    }
}

impl<K: Into<OptionId>> FromIterator<(K, i64)> for Ballot {
    fn from_iter<I: IntoIterator<Item = (K, i64)>>(iter: I) -> Self {
        let mut ballot = Ballot::default();
        for (k, v) in iter {
            ballot.set(k.into(), VoteCount(v));
        }
        ballot
    }
}

impl Ballot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, option: &OptionId) -> VoteCount {
        self.votes.get(option).copied().unwrap_or_default()
    }

    /// Sets the vote on `option`, returning the previous value.
    pub fn set(&mut self, option: OptionId, votes: VoteCount) -> VoteCount {
        let old = if votes.0 == 0 {
            self.votes.remove(&option)
        } else {
            self.votes.insert(option, votes)
        };
        old.unwrap_or_default()
    }

    /// Non-zero entries in option-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&OptionId, VoteCount)> {
        self.votes.iter().map(|(k, v)| (k, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }
}

/// Total cost of a ballot.
pub fn ballot_cost(ballot: &Ballot) -> Credits {
    Credits(ballot.iter().map(|(_, v)| vote_cost(v).0).sum())
}

/// Remaining credits after paying for `ballot`, or `None` when it is over budget.
pub fn remaining_credits(ballot: &Ballot, budget: Credits) -> Option<Credits> {
    budget.0.checked_sub(ballot_cost(ballot).0).map(Credits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("ballot costs {cost} credits but the budget is {budget}")]
pub struct OverBudget {
    pub cost: Credits,
    pub budget: Credits,
}

/// Accepts a ballot iff its total cost is within `budget`.
pub fn validate_ballot(ballot: &Ballot, budget: Credits) -> Result<(), OverBudget> {
    let cost = ballot_cost(ballot);
    if cost <= budget {
        Ok(())
    } else {
        Err(OverBudget { cost, budget })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MechanismError {
    #[error("unknown option `{0}`")]
    UnknownOption(OptionId),
    #[error(transparent)]
    OverBudget(#[from] OverBudget),
}

/// One selectable row of a vote dropdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffordableVote {
    pub votes: VoteCount,
    pub cost: Credits,
}

/// Every vote value `option` may take while the rest of `ballot` is held
/// fixed and the total stays within `budget`, in ascending order.
///
/// `ballot` must itself be valid, so the result always contains both `0` and
/// the option's current value.
pub fn affordable_votes(
    ballot: &Ballot,
    option: &OptionId,
    options: &[OptionId],
    budget: Credits,
) -> Result<Vec<AffordableVote>, MechanismError> {
    if !options.contains(option) {
        return Err(MechanismError::UnknownOption(option.clone()));
    }
    validate_ballot(ballot, budget)?;
    let headroom = budget.0 - ballot_cost(ballot).0 + vote_cost(ballot.get(option)).0;
    let max = isqrt(headroom) as i64;
    Ok((-max..=max)
        .map(|v| AffordableVote {
            votes: VoteCount(v),
            cost: vote_cost(VoteCount(v)),
        })
        .collect())
}

/// Largest `r` with `r² ≤ n`.
pub(crate) fn isqrt(n: u64) -> u64 {
    n.isqrt()
}

/// Per-option vote totals across submitted ballots.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyResult {
    pub totals: BTreeMap<OptionId, i64>,
}

impl TallyResult {
    pub fn get(&self, option: &OptionId) -> i64 {
        self.totals.get(option).copied().unwrap_or(0)
    }
}

/// Sums votes per option. Every id in `options` is reported, zero when no
/// ballot voted on it.
pub fn tally<'a>(options: &[OptionId], ballots: impl IntoIterator<Item = &'a Ballot>) -> TallyResult {
    let mut totals: BTreeMap<OptionId, i64> = options.iter().map(|o| (o.clone(), 0)).collect();
    for ballot in ballots {
        for (option, v) in ballot.iter() {
            *totals.entry(option.clone()).or_insert(0) += v.0;
        }
    }
    TallyResult { totals }
}
