//! Core of the quadratic survey platform.
//!
//! - [`mechanism`]: vote costs, budgets, ballot validation and tallying.
//! - [`survey`]: option pools, survey configuration, condition assignment and
//!   seeded randomization.
//! - [`events`]: the clickstream schema and the replayable session state machine.
//! - [`metrics`]: edit distances, time per option, adjustment sizing and
//!   NASA-TLX scoring.

pub mod events;
pub mod mechanism;
pub mod metrics;
pub mod survey;

pub use events::{Event, EventKind, IllegalEvent, Phase, SessionHeader, SessionLog, SessionState};
pub use mechanism::{Ballot, Credits, OptionId, OverBudget, VoteCount};
pub use survey::{Condition, Interface, LengthArm, SurveyConfig};
