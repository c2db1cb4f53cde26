//! Signed per-action edit distance with separate linear predictors for the
//! mean and the log standard deviation of a normal likelihood.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    cell_label, check_cell, sum_std_normal, Cursor, Derived, DistObs, Domain, InteractionParams, Layout, Model,
    ModelError,
};
use crate::dist::{half_normal_logpdf, LN_SQRT_2PI};

/// One linear predictor: length, interface, interaction and user terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVarPart {
    pub mu_l: f64,
    pub beta_l: f64,
    pub mu_i: f64,
    pub sigma_i: f64,
    pub z_i: [f64; 2],
    pub phi: InteractionParams,
    pub mu_u: f64,
    pub sigma_u: f64,
    pub z_u: Vec<f64>,
}

impl MeanVarPart {
    pub fn zero(n_users: usize) -> Self {
        MeanVarPart {
            mu_l: 0.0,
            beta_l: 0.0,
            mu_i: 0.0,
            sigma_i: 0.3,
            z_i: [0.0; 2],
            phi: InteractionParams::zero(),
            mu_u: 0.0,
            sigma_u: 0.3,
            z_u: vec![0.0; n_users],
        }
    }

    fn push(&self, v: &mut Vec<f64>) {
        v.extend_from_slice(&[self.mu_l, self.beta_l, self.mu_i, self.sigma_i]);
        v.extend_from_slice(&self.z_i);
        self.phi.push(v);
        v.push(self.mu_u);
        v.push(self.sigma_u);
        v.extend_from_slice(&self.z_u);
    }

    fn read(c: &mut Cursor<'_>, n_users: usize) -> Self {
        MeanVarPart {
            mu_l: c.next(),
            beta_l: c.next(),
            mu_i: c.next(),
            sigma_i: c.next(),
            z_i: c.array(),
            phi: c.interaction(),
            mu_u: c.next(),
            sigma_u: c.next(),
            z_u: c.take(n_users).to_vec(),
        }
    }

    fn scales_positive(&self) -> bool {
        self.sigma_i > 0.0 && self.sigma_u > 0.0 && self.phi.sigma.iter().all(|&s| s > 0.0)
    }

    fn log_prior(&self, lkj_shape: f64) -> f64 {
        sum_std_normal(&[self.mu_l, self.beta_l, self.mu_i, self.mu_u])
            + half_normal_logpdf(self.sigma_i, 0.5)
            + sum_std_normal(&self.z_i)
            + self.phi.sigma.iter().map(|&s| half_normal_logpdf(s, 0.5)).sum::<f64>()
            + self.phi.log_prior_z_rho(lkj_shape)
            + half_normal_logpdf(self.sigma_u, 0.5)
            + sum_std_normal(&self.z_u)
    }

    /// Evaluates the predictor; `phi` is precomputed by the caller.
    fn predict(&self, phi: &[[f64; 2]; 2], length: usize, interface: usize, user: usize) -> f64 {
        self.mu_l
            + self.beta_l * length as f64
            + self.mu_i
            + self.sigma_i * self.z_i[interface]
            + phi[length][interface]
            + self.mu_u
            + self.sigma_u * self.z_u[user]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVarParams {
    pub mean: MeanVarPart,
    /// Predictor of `log σ`.
    pub log_sd: MeanVarPart,
}

impl MeanVarParams {
    pub fn zero(n_users: usize) -> Self {
        MeanVarParams {
            mean: MeanVarPart::zero(n_users),
            log_sd: MeanVarPart::zero(n_users),
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.mean.push(&mut v);
        self.log_sd.push(&mut v);
        v
    }

    pub fn unpack(theta: &[f64], n_users: usize) -> Self {
        let mut c = Cursor::new(theta);
        MeanVarParams {
            mean: MeanVarPart::read(&mut c, n_users),
            log_sd: MeanVarPart::read(&mut c, n_users),
        }
    }

    /// `(μ, σ)` for one user in one cell.
    pub fn moments(&self, length: usize, interface: usize, user: usize) -> (f64, f64) {
        let mu = self.mean.predict(&self.mean.phi.phi(), length, interface, user);
        let log_sd = self.log_sd.predict(&self.log_sd.phi.phi(), length, interface, user);
        (mu, log_sd.exp())
    }
}

/// Count, mean and centered sum of squares per (length, interface, user).
#[derive(Debug, Clone, Copy)]
struct Group {
    length: usize,
    interface: usize,
    user: usize,
    n: f64,
    mean: f64,
    ss: f64,
}

#[derive(Debug, Clone)]
pub struct MeanVarModel {
    n_users: usize,
    lkj_shape: f64,
    groups: Vec<Group>,
}

impl MeanVarModel {
    pub const DEFAULT_LKJ_SHAPE: f64 = 3.0;

    pub fn new(data: &[DistObs], n_users: usize) -> Result<Self, ModelError> {
        if data.is_empty() {
            return Err(ModelError::NoData);
        }
        let mut acc: BTreeMap<(usize, usize, usize), Vec<f64>> = BTreeMap::new();
        for (i, o) in data.iter().enumerate() {
            check_cell(i, o.length, o.interface)?;
            if o.user >= n_users {
                return Err(ModelError::BadObservation {
                    index: i,
                    message: format!("user {} not below {n_users}", o.user),
                });
            }
            if !o.d.is_finite() {
                return Err(ModelError::BadObservation {
                    index: i,
                    message: "distance is not finite".into(),
                });
            }
            acc.entry((o.length, o.interface, o.user)).or_default().push(o.d);
        }
        let groups = acc
            .into_iter()
            .map(|((length, interface, user), ds)| {
                let n = ds.len() as f64;
                let mean = ds.iter().sum::<f64>() / n;
                let ss = ds.iter().map(|d| (d - mean) * (d - mean)).sum();
                Group {
                    length,
                    interface,
                    user,
                    n,
                    mean,
                    ss,
                }
            })
            .collect();
        Ok(MeanVarModel {
            n_users,
            lkj_shape: Self::DEFAULT_LKJ_SHAPE,
            groups,
        })
    }

    pub fn with_lkj_shape(mut self, shape: f64) -> Self {
        self.lkj_shape = shape;
        self
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    fn layout(&self) -> Layout {
        let mut l = Layout::default();
        for part in ["_mu", "_sigma"] {
            l.scalar(&format!("mu_l{part}"), Domain::Real)
                .scalar(&format!("beta_l{part}"), Domain::Real)
                .scalar(&format!("mu_i{part}"), Domain::Real)
                .scalar(&format!("sigma_i{part}"), Domain::Positive)
                .vector(&format!("z_i{part}"), 2, Domain::Real)
                .interaction(part)
                .scalar(&format!("mu_u{part}"), Domain::Real)
                .scalar(&format!("sigma_u{part}"), Domain::Positive)
                .vector(&format!("z_u{part}"), self.n_users, Domain::Real);
        }
        l
    }

    pub fn log_posterior_params(&self, p: &MeanVarParams) -> f64 {
        if !p.mean.scales_positive()
            || !p.log_sd.scales_positive()
            || p.mean.z_u.len() != self.n_users
            || p.log_sd.z_u.len() != self.n_users
        {
            return f64::NEG_INFINITY;
        }
        let mut lp = p.mean.log_prior(self.lkj_shape) + p.log_sd.log_prior(self.lkj_shape);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let phi_mu = p.mean.phi.phi();
        let phi_sd = p.log_sd.phi.phi();
        for g in &self.groups {
            let mu = p.mean.predict(&phi_mu, g.length, g.interface, g.user);
            let log_sd = p.log_sd.predict(&phi_sd, g.length, g.interface, g.user);
            let inv_var = (-2.0 * log_sd).exp();
            let dev = g.mean - mu;
            lp += -g.n * (log_sd + LN_SQRT_2PI) - 0.5 * (g.ss + g.n * dev * dev) * inv_var;
        }
        lp
    }
}

impl Model for MeanVarModel {
    fn name(&self) -> &str {
        "dist-meanvar"
    }

    fn param_names(&self) -> Vec<String> {
        self.layout().names
    }

    fn domains(&self) -> Vec<Domain> {
        self.layout().domains
    }

    fn log_posterior(&self, theta: &[f64]) -> f64 {
        self.log_posterior_params(&MeanVarParams::unpack(theta, self.n_users))
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut p = MeanVarParams::zero(self.n_users);
        let n: f64 = self.groups.iter().map(|g| g.n).sum();
        let mean = self.groups.iter().map(|g| g.n * g.mean).sum::<f64>() / n;
        let ss: f64 = self
            .groups
            .iter()
            .map(|g| g.ss + g.n * (g.mean - mean) * (g.mean - mean))
            .sum();
        p.mean.mu_l = mean;
        p.log_sd.mu_l = (ss / n).sqrt().max(1e-3).ln();
        p.pack()
    }

    /// Per observed cell, averaged over that cell's users: `mean[cell]`, and
    /// the implied observation spread `sd[cell]` (within-user variance plus
    /// between-user variance of the means) with its square `var[cell]`.
    fn derived(&self, theta: &[f64]) -> Vec<Derived> {
        let p = MeanVarParams::unpack(theta, self.n_users);
        let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for g in &self.groups {
            cells.entry((g.length, g.interface)).or_default().push(g.user);
        }
        let mut out = Vec::new();
        for ((l, i), users) in cells {
            let label = cell_label(l, i);
            let m: Vec<(f64, f64)> = users.iter().map(|&u| p.moments(l, i, u)).collect();
            let k = m.len() as f64;
            let mean = m.iter().map(|x| x.0).sum::<f64>() / k;
            let within = m.iter().map(|x| x.1 * x.1).sum::<f64>() / k;
            let between = m.iter().map(|x| (x.0 - mean) * (x.0 - mean)).sum::<f64>() / k;
            let var = within + between;
            out.push(Derived::new(format!("mean[{label}]"), mean));
            out.push(Derived::new(format!("sd[{label}]"), var.sqrt()));
            out.push(Derived::new(format!("var[{label}]"), var));
        }
        out
    }
}
