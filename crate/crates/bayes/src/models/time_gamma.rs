//! Total survey time per condition, each condition an independent Gamma
//! (shape/rate) submodel. Fitting several groups jointly is the same as
//! fitting them separately because the posterior factorizes.

use serde::{Deserialize, Serialize};

use super::{Derived, Domain, Model, ModelError};
use crate::dist::gamma_logpdf;
use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGroup {
    pub label: String,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Stats {
    n: f64,
    sum_log: f64,
    sum: f64,
}

#[derive(Debug, Clone)]
pub struct TimeGammaModel {
    labels: Vec<String>,
    stats: Vec<Stats>,
    out_of_support: bool,
}

impl TimeGammaModel {
    pub const ALPHA_PRIOR: (f64, f64) = (2.0, 0.5);
    pub const BETA_PRIOR: (f64, f64) = (1.0, 1.0);

    pub fn new(groups: &[TimeGroup]) -> Result<Self, ModelError> {
        if groups.is_empty() || groups.iter().any(|g| g.times.is_empty()) {
            return Err(ModelError::NoData);
        }
        let mut out_of_support = false;
        let mut stats = Vec::with_capacity(groups.len());
        let mut offset = 0;
        for g in groups {
            let mut s = Stats {
                n: 0.0,
                sum_log: 0.0,
                sum: 0.0,
            };
            for (i, &t) in g.times.iter().enumerate() {
                if t.is_nan() {
                    return Err(ModelError::BadObservation {
                        index: offset + i,
                        message: "time is NaN".into(),
                    });
                }
                if !(t > 0.0) || t.is_infinite() {
                    out_of_support = true;
                    continue;
                }
                s.n += 1.0;
                s.sum_log += t.ln();
                s.sum += t;
            }
            offset += g.times.len();
            stats.push(s);
        }
        Ok(TimeGammaModel {
            labels: groups.iter().map(|g| g.label.clone()).collect(),
            stats,
            out_of_support,
        })
    }

    pub fn single(label: impl Into<String>, times: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(&[TimeGroup {
            label: label.into(),
            times,
        }])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl Model for TimeGammaModel {
    fn name(&self) -> &str {
        "time-gamma"
    }

    /// `alpha[g]`, `beta[g]` for each group in order.
    fn param_names(&self) -> Vec<String> {
        self.labels
            .iter()
            .flat_map(|l| [format!("alpha[{l}]"), format!("beta[{l}]")])
            .collect()
    }

    fn domains(&self) -> Vec<Domain> {
        vec![Domain::Positive; 2 * self.labels.len()]
    }

    fn log_posterior(&self, theta: &[f64]) -> f64 {
        if self.out_of_support || theta.len() != 2 * self.stats.len() {
            return f64::NEG_INFINITY;
        }
        let mut lp = 0.0;
        for (s, ab) in self.stats.iter().zip(theta.chunks_exact(2)) {
            let (a, b) = (ab[0], ab[1]);
            if !(a > 0.0) || !(b > 0.0) {
                return f64::NEG_INFINITY;
            }
            lp += gamma_logpdf(a, Self::ALPHA_PRIOR.0, Self::ALPHA_PRIOR.1)
                + gamma_logpdf(b, Self::BETA_PRIOR.0, Self::BETA_PRIOR.1)
                + s.n * (a * b.ln() - ln_gamma(a))
                + (a - 1.0) * s.sum_log
                - b * s.sum;
        }
        lp
    }

    /// Method-of-moments shape and rate per group.
    fn initial_point(&self) -> Vec<f64> {
        self.stats
            .iter()
            .flat_map(|s| {
                if s.n < 2.0 {
                    return [2.0, 1.0];
                }
                let mean = s.sum / s.n;
                // Shape from the log-mean gap; stable without second moments.
                let gap = (mean.ln() - s.sum_log / s.n).max(1e-6);
                let a = ((3.0 - gap + ((gap - 3.0).powi(2) + 24.0 * gap).sqrt()) / (12.0 * gap)).clamp(1e-3, 1e6);
                [a, a / mean]
            })
            .collect()
    }

    /// `mean[g] = α/β` and `sd[g] = √α/β`.
    fn derived(&self, theta: &[f64]) -> Vec<Derived> {
        self.labels
            .iter()
            .zip(theta.chunks_exact(2))
            .flat_map(|(l, ab)| {
                [
                    Derived::new(format!("mean[{l}]"), ab[0] / ab[1]),
                    Derived::new(format!("sd[{l}]"), ab[0].sqrt() / ab[1]),
                ]
            })
            .collect()
    }
}
