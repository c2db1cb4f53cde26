//! Forward samplers for the Bayesian models.
//!
//! Each draw is independent given the true parameters and one design row.
//! Parameters follow the same conventions as the model crate; in particular
//! Gamma uses shape and rate, and the edit-distance exponential uses scale.

use qs_bayes::models::{
    cell_label, CumDistObs, CumDistParams, DistExpParams, DistObs, InteractionParams, MeanVarParams, MeanVarPart,
    TimeGroup, TlxObs, TlxParams,
};
use qs_core::survey::rng_from_seed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Covariates for one synthetic observation. `length` and `interface` are
/// 0/1 codes; the cumulative-distance model reads `interface` as the version.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub length: usize,
    pub interface: usize,
    pub user: usize,
    pub step: f64,
}

impl DesignRow {
    pub fn cell(length: usize, interface: usize, user: usize) -> Self {
        DesignRow { length, interface, user, step: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TrueParams {
    Tlx(TlxParams),
    DistExp(DistExpParams),
    MeanVar(MeanVarParams),
    CumDist(CumDistParams),
    /// `(label, shape, rate)` per group; a row's group is its cell label.
    TimeGamma(Vec<(String, f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "data", rename_all = "snake_case")]
pub enum Dataset {
    Tlx(Vec<TlxObs>),
    Dist(Vec<DistObs>),
    CumDist(Vec<CumDistObs>),
    Time(Vec<TimeGroup>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("parameter {name} = {value} is outside its domain")]
    Domain { name: String, value: f64 },
    #[error("design row {row}: {message}")]
    Design { row: usize, message: String },
    #[error("no true parameters for group `{0}`")]
    MissingGroup(String),
}

fn positive(name: &str, value: f64) -> Result<(), GenError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(GenError::Domain { name: name.into(), value })
    }
}

fn finite(name: &str, value: f64) -> Result<(), GenError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(GenError::Domain { name: name.into(), value })
    }
}

fn check_interaction(prefix: &str, p: &InteractionParams) -> Result<(), GenError> {
    for (i, s) in p.sigma.iter().enumerate() {
        positive(&format!("{prefix}sigma[{i}]"), *s)?;
    }
    for (i, z) in p.z.iter().enumerate() {
        finite(&format!("{prefix}z[{i}]"), *z)?;
    }
    if !(p.rho > -1.0 && p.rho < 1.0) {
        return Err(GenError::Domain { name: format!("{prefix}rho"), value: p.rho });
    }
    Ok(())
}

fn check_rows(design: &[DesignRow], n_users: Option<usize>) -> Result<(), GenError> {
    for (row, d) in design.iter().enumerate() {
        let bad = |message: String| Err(GenError::Design { row, message });
        if d.length > 1 || d.interface > 1 {
            return bad(format!("cell ({}, {}) is not a 0/1 code", d.length, d.interface));
        }
        if let Some(n) = n_users {
            if d.user >= n {
                return bad(format!("user {} but only {n} user effects", d.user));
            }
        }
        if !(d.step.is_finite() && d.step >= 0.0) {
            return bad(format!("step {} must be finite and non-negative", d.step));
        }
    }
    Ok(())
}

/// Draws one synthetic observation per design row.
pub fn sample_from_model(params: &TrueParams, design: &[DesignRow], seed: u64) -> Result<Dataset, GenError> {
    let mut rng = rng_from_seed(seed);
    match params {
        TrueParams::Tlx(p) => {
            check_rows(design, None)?;
            for (name, v) in [("alpha", p.alpha), ("mu_l", p.mu_l), ("beta_l", p.beta_l), ("mu_bi", p.mu_bi)] {
                finite(name, v)?;
            }
            positive("sigma_bi", p.sigma_bi)?;
            check_interaction("phi_", &p.phi)?;
            if p.z_tau.is_empty() {
                return Err(GenError::Domain { name: "z_tau".into(), value: f64::NAN });
            }
            let tau = p.cutpoints();
            Ok(Dataset::Tlx(
                design
                    .iter()
                    .map(|d| TlxObs {
                        y: ordered_logistic(p.eta(d.length, d.interface), &tau, &mut rng),
                        length: d.length,
                        interface: d.interface,
                    })
                    .collect(),
            ))
        }
        TrueParams::DistExp(p) => {
            check_rows(design, Some(p.z_u.len()))?;
            positive("sigma_bi", p.sigma_bi)?;
            positive("sigma_u", p.sigma_u)?;
            check_interaction("phi_", &p.phi)?;
            let mut out = Vec::with_capacity(design.len());
            for d in design {
                let scale = p.eta(d.length, d.interface, d.user).exp();
                positive("exp(eta)", scale)?;
                out.push(DistObs {
                    d: exponential_scale(scale, &mut rng),
                    length: d.length,
                    interface: d.interface,
                    user: d.user,
                });
            }
            Ok(Dataset::Dist(out))
        }
        TrueParams::MeanVar(p) => {
            for (prefix, part) in [("mean_", &p.mean), ("log_sd_", &p.log_sd)] {
                check_part(prefix, part)?;
            }
            check_rows(design, Some(p.mean.z_u.len().min(p.log_sd.z_u.len())))?;
            let mut out = Vec::with_capacity(design.len());
            for d in design {
                let (mu, sd) = p.moments(d.length, d.interface, d.user);
                positive("sd", sd)?;
                out.push(DistObs {
                    d: Normal::new(mu, sd).expect("checked").sample(&mut rng),
                    length: d.length,
                    interface: d.interface,
                    user: d.user,
                });
            }
            Ok(Dataset::Dist(out))
        }
        TrueParams::CumDist(p) => {
            check_rows(design, Some(p.z_u.len()))?;
            positive("sigma_beta", p.sigma_beta)?;
            positive("sigma_u", p.sigma_u)?;
            positive("sigma_obs", p.sigma_obs)?;
            Ok(Dataset::CumDist(
                design
                    .iter()
                    .map(|d| CumDistObs {
                        d: truncated_normal_lower0(p.location(d.interface, d.step, d.user), p.sigma_obs, &mut rng),
                        version: d.interface,
                        step: d.step,
                        user: d.user,
                    })
                    .collect(),
            ))
        }
        TrueParams::TimeGamma(groups) => {
            check_rows(design, None)?;
            for (label, shape, rate) in groups {
                positive(&format!("alpha[{label}]"), *shape)?;
                positive(&format!("beta[{label}]"), *rate)?;
            }
            let mut out: Vec<TimeGroup> = groups
                .iter()
                .map(|(label, _, _)| TimeGroup { label: label.clone(), times: Vec::new() })
                .collect();
            for d in design {
                let label = cell_label(d.length, d.interface);
                let g = groups
                    .iter()
                    .position(|(l, _, _)| *l == label)
                    .ok_or_else(|| GenError::MissingGroup(label.clone()))?;
                let (_, shape, rate) = &groups[g];
                out[g].times.push(gamma_rate(*shape, *rate, &mut rng));
            }
            out.retain(|g| !g.times.is_empty());
            Ok(Dataset::Time(out))
        }
    }
}

fn check_part(prefix: &str, p: &MeanVarPart) -> Result<(), GenError> {
    positive(&format!("{prefix}sigma_i"), p.sigma_i)?;
    positive(&format!("{prefix}sigma_u"), p.sigma_u)?;
    check_interaction(&format!("{prefix}phi_"), &p.phi)
}

/// Gamma with shape and rate (mean `shape / rate`).
pub fn gamma_rate(shape: f64, rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive shape and rate").sample(rng)
}

/// Exponential with the given mean.
pub fn exponential_scale(scale: f64, rng: &mut ChaCha8Rng) -> f64 {
    Exp::new(1.0 / scale).expect("positive scale").sample(rng)
}

/// Normal(`mu`, `sigma`) conditioned on being non-negative.
///
/// Plain rejection when the bound is not far into the upper tail, else
/// exponential-proposal rejection in the standardized tail.
pub fn truncated_normal_lower0(mu: f64, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    let a = -mu / sigma;
    if a < 0.5 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= a {
                return (mu + sigma * z).max(0.0);
            }
        }
    }
    let rate = (a + (a * a + 4.0).sqrt()) / 2.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / rate;
        let u: f64 = rng.random();
        if u <= (-(z - rate) * (z - rate) / 2.0).exp() {
            return (mu + sigma * z).max(0.0);
        }
    }
}

/// Category of `eta + Logistic(0, 1)` against ascending cutpoints `tau`.
pub fn ordered_logistic(eta: f64, tau: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let latent = eta + (u / (1.0 - u)).ln();
    tau.iter().take_while(|t| **t < latent).count()
}
