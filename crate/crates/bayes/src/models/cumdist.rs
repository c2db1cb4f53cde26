//! Growth of cumulative edit distance over adjustment steps, with a
//! normal likelihood truncated below at zero.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{interface_label, sum_std_normal, Cursor, Derived, Domain, Layout, Model, ModelError};
use crate::dist::{half_normal_logpdf, normal_logpdf, truncated_normal_lower0_logpdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumDistObs {
    pub d: f64,
    /// Interface version, 0 or 1.
    pub version: usize,
    pub step: f64,
    pub user: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumDistParams {
    pub alpha_shared: f64,
    pub mu_beta: f64,
    pub sigma_beta: f64,
    pub beta_v: [f64; 2],
    pub mu_u: f64,
    pub sigma_u: f64,
    pub z_u: Vec<f64>,
    pub sigma_obs: f64,
}

impl CumDistParams {
    pub fn zero(n_users: usize) -> Self {
        CumDistParams {
            alpha_shared: 2.0,
            mu_beta: 0.05,
            sigma_beta: 0.05,
            beta_v: [0.05; 2],
            mu_u: 0.0,
            sigma_u: 0.05,
            z_u: vec![0.0; n_users],
            sigma_obs: 0.3,
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut v = vec![self.alpha_shared, self.mu_beta, self.sigma_beta];
        v.extend_from_slice(&self.beta_v);
        v.push(self.mu_u);
        v.push(self.sigma_u);
        v.extend_from_slice(&self.z_u);
        v.push(self.sigma_obs);
        v
    }

    pub fn unpack(theta: &[f64], n_users: usize) -> Self {
        let mut c = Cursor::new(theta);
        CumDistParams {
            alpha_shared: c.next(),
            mu_beta: c.next(),
            sigma_beta: c.next(),
            beta_v: c.array(),
            mu_u: c.next(),
            sigma_u: c.next(),
            z_u: c.take(n_users).to_vec(),
            sigma_obs: c.next(),
        }
    }

    pub fn user_effect(&self, user: usize) -> f64 {
        self.mu_u + self.sigma_u * self.z_u[user]
    }

    pub fn location(&self, version: usize, step: f64, user: usize) -> f64 {
        self.alpha_shared + (self.beta_v[version] + self.user_effect(user)) * step
    }
}

#[derive(Debug, Clone)]
pub struct CumDistModel {
    n_users: usize,
    data: Vec<CumDistObs>,
    out_of_support: bool,
}

impl CumDistModel {
    pub fn new(data: &[CumDistObs], n_users: usize) -> Result<Self, ModelError> {
        if data.is_empty() {
            return Err(ModelError::NoData);
        }
        let mut out_of_support = false;
        for (i, o) in data.iter().enumerate() {
            if o.version > 1 {
                return Err(ModelError::BadObservation {
                    index: i,
                    message: format!("version {} must be 0 or 1", o.version),
                });
            }
            if o.user >= n_users {
                return Err(ModelError::BadObservation {
                    index: i,
                    message: format!("user {} not below {n_users}", o.user),
                });
            }
            if o.d.is_nan() || o.step.is_nan() {
                return Err(ModelError::BadObservation {
                    index: i,
                    message: "NaN value".into(),
                });
            }
            out_of_support |= o.d < 0.0 || o.step < 0.0 || o.d.is_infinite() || o.step.is_infinite();
        }
        Ok(CumDistModel {
            n_users,
            data: data.to_vec(),
            out_of_support,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    fn layout(&self) -> Layout {
        let mut l = Layout::default();
        l.scalar("alpha_shared", Domain::Real)
            .scalar("mu_beta", Domain::Real)
            .scalar("sigma_beta", Domain::Positive)
            .vector("beta_v", 2, Domain::Real)
            .scalar("mu_u", Domain::Real)
            .scalar("sigma_u", Domain::Positive)
            .vector("z_u", self.n_users, Domain::Real)
            .scalar("sigma_obs", Domain::Positive);
        l
    }

    pub fn log_posterior_params(&self, p: &CumDistParams) -> f64 {
        if self.out_of_support
            || !(p.sigma_beta > 0.0)
            || !(p.sigma_u > 0.0)
            || !(p.sigma_obs > 0.0)
            || p.z_u.len() != self.n_users
        {
            return f64::NEG_INFINITY;
        }
        let mut lp = normal_logpdf(p.alpha_shared, 2.0, 0.5)
            + normal_logpdf(p.mu_beta, 0.05, 0.05)
            + half_normal_logpdf(p.sigma_beta, 0.1)
            + normal_logpdf(p.beta_v[0], p.mu_beta, p.sigma_beta)
            + normal_logpdf(p.beta_v[1], p.mu_beta, p.sigma_beta)
            + sum_std_normal(&[p.mu_u])
            + half_normal_logpdf(p.sigma_u, 0.1)
            + sum_std_normal(&p.z_u)
            + half_normal_logpdf(p.sigma_obs, 0.3);
        for o in &self.data {
            lp += truncated_normal_lower0_logpdf(o.d, p.location(o.version, o.step, o.user), p.sigma_obs);
        }
        lp
    }

    fn version_users(&self) -> [BTreeSet<usize>; 2] {
        let mut out: [BTreeSet<usize>; 2] = Default::default();
        for o in &self.data {
            out[o.version].insert(o.user);
        }
        out
    }
}

impl Model for CumDistModel {
    fn name(&self) -> &str {
        "cumdist"
    }

    fn param_names(&self) -> Vec<String> {
        self.layout().names
    }

    fn domains(&self) -> Vec<Domain> {
        self.layout().domains
    }

    fn log_posterior(&self, theta: &[f64]) -> f64 {
        self.log_posterior_params(&CumDistParams::unpack(theta, self.n_users))
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut p = CumDistParams::zero(self.n_users);
        // Least-squares slope through the intercept prior mean.
        let (num, den) = self
            .data
            .iter()
            .fold((0.0, 0.0), |(n, d), o| (n + (o.d - 2.0) * o.step, d + o.step * o.step));
        if den > 0.0 {
            p.mu_beta = num / den;
            p.beta_v = [p.mu_beta; 2];
        }
        let resid: f64 = self
            .data
            .iter()
            .map(|o| (o.d - p.location(o.version, o.step, o.user)).powi(2))
            .sum::<f64>()
            / self.data.len() as f64;
        p.sigma_obs = resid.sqrt().max(0.1);
        p.pack()
    }

    /// `slope[version]`: the version slope plus the average user effect
    /// among that version's users.
    fn derived(&self, theta: &[f64]) -> Vec<Derived> {
        let p = CumDistParams::unpack(theta, self.n_users);
        let mut out = Vec::new();
        for (v, users) in self.version_users().iter().enumerate() {
            if users.is_empty() {
                continue;
            }
            let u = users.iter().map(|&u| p.user_effect(u)).sum::<f64>() / users.len() as f64;
            out.push(Derived::new(format!("slope[{}]", interface_label(v)), p.beta_v[v] + u));
        }
        out
    }
}
