//! Synthetic respondents and generative samplers.
//!
//! [`agent`] drives a live [`qs_core::SessionState`] with one of three
//! scripted policies and records the resulting clickstream. [`generative`]
//! draws synthetic datasets from each Bayesian model given true parameters
//! and a design, for posterior-recovery tests.

pub mod agent;
pub mod generative;

pub use agent::{batch_configs, simulate_batch, simulate_session, simulate_with_header, AgentPolicy, Dwell, SimConfig, SimError};
pub use generative::{sample_from_model, Dataset, DesignRow, GenError, TrueParams};
