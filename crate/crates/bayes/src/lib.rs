//! Hierarchical Bayesian models for survey outcomes, a random-walk
//! Metropolis sampler, convergence diagnostics and posterior summaries.
//!
//! ```
//! use qs_bayes::{models::TimeGammaModel, sample, SamplerConfig, summarize_draws};
//!
//! let times = (1..=60).map(|i| 10.0 + (i % 7) as f64).collect();
//! let model = TimeGammaModel::single("short_text", times).unwrap();
//! let cfg = SamplerConfig { burn_in: 500, iterations: 1_000, ..Default::default() };
//! let draws = sample(&model, &cfg).unwrap();
//! let table = summarize_draws(&draws, 0.94).unwrap();
//! assert_eq!(table[0].name, "alpha[short_text]");
//! ```

pub mod diagnostics;
pub mod dist;
pub mod draws;
pub mod models;
pub mod sampler;
pub mod summary;

pub use diagnostics::{split_rhat, DiagError, Rhat};
pub use draws::{ChainDraws, Draws, DrawsError};
pub use models::{Derived, Domain, FnModel, Model, ModelError};
pub use sampler::{rw_metropolis, sample, SamplerConfig, SamplerError};
pub use summary::{
    contrast, hdi, max_rhat, mode_estimate, summarize, summarize_draws, Contrast, ContrastOptions, ParamSummary,
    PosteriorSummary, QuantityDraws, SummaryError, DEFAULT_HDI_MASS, DEFAULT_ROPE,
};
