//! Per-option edit distance with an exponential likelihood whose mean is
//! `exp(η)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    cell_label, check_cell, interface_label, sum_std_normal, Cursor, Derived, Domain, InteractionParams, Layout,
    Model, ModelError,
};
use crate::dist::{exponential_rate_logpdf, half_normal_logpdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistObs {
    pub d: f64,
    pub length: usize,
    pub interface: usize,
    pub user: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistExpParams {
    pub mu_l: f64,
    pub beta_l: f64,
    pub mu_bi: f64,
    pub sigma_bi: f64,
    pub bi_raw: [f64; 2],
    pub phi: InteractionParams,
    pub mu_u: f64,
    pub sigma_u: f64,
    pub z_u: Vec<f64>,
}

impl DistExpParams {
    pub fn zero(n_users: usize) -> Self {
        DistExpParams {
            mu_l: 0.0,
            beta_l: 0.0,
            mu_bi: 0.0,
            sigma_bi: 0.3,
            bi_raw: [0.0; 2],
            phi: InteractionParams::zero(),
            mu_u: 0.0,
            sigma_u: 0.5,
            z_u: vec![0.0; n_users],
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut v = vec![self.mu_l, self.beta_l, self.mu_bi, self.sigma_bi];
        v.extend_from_slice(&self.bi_raw);
        self.phi.push(&mut v);
        v.push(self.mu_u);
        v.push(self.sigma_u);
        v.extend_from_slice(&self.z_u);
        v
    }

    pub fn unpack(theta: &[f64], n_users: usize) -> Self {
        let mut c = Cursor::new(theta);
        DistExpParams {
            mu_l: c.next(),
            beta_l: c.next(),
            mu_bi: c.next(),
            sigma_bi: c.next(),
            bi_raw: c.array(),
            phi: c.interaction(),
            mu_u: c.next(),
            sigma_u: c.next(),
            z_u: c.take(n_users).to_vec(),
        }
    }

    /// Linear predictor without the user deviation.
    pub fn eta_population(&self, length: usize, interface: usize) -> f64 {
        let phi = self.phi.phi();
        self.mu_l
            + self.beta_l * length as f64
            + self.mu_bi
            + self.sigma_bi * self.bi_raw[interface]
            + phi[length][interface]
            + self.mu_u
    }

    pub fn eta(&self, length: usize, interface: usize, user: usize) -> f64 {
        self.eta_population(length, interface) + self.sigma_u * self.z_u[user]
    }
}

#[derive(Debug, Clone, Copy)]
struct Group {
    length: usize,
    interface: usize,
    user: usize,
    n: f64,
    sum: f64,
}

/// Observations are reduced to count and sum per (length, interface, user).
#[derive(Debug, Clone)]
pub struct DistExpModel {
    n_users: usize,
    lkj_shape: f64,
    groups: Vec<Group>,
    /// Any distance outside the support makes the posterior `−∞`.
    out_of_support: bool,
}

impl DistExpModel {
    pub const DEFAULT_LKJ_SHAPE: f64 = 3.0;

    /// `n_users` must exceed every user index in `data`.
    pub fn new(data: &[DistObs], n_users: usize) -> Result<Self, ModelError> {
        if data.is_empty() {
            return Err(ModelError::NoData);
        }
        let mut acc: BTreeMap<(usize, usize, usize), (f64, f64)> = BTreeMap::new();
        let mut out_of_support = false;
        for (i, o) in data.iter().enumerate() {
            check_cell(i, o.length, o.interface)?;
            if o.user >= n_users {
                return Err(ModelError::BadObservation {
                    index: i,
                    message: format!("user {} not below {n_users}", o.user),
                });
            }
            if o.d.is_nan() {
                return Err(ModelError::BadObservation {
                    index: i,
                    message: "distance is NaN".into(),
                });
            }
            out_of_support |= o.d < 0.0 || o.d.is_infinite();
            let e = acc.entry((o.length, o.interface, o.user)).or_default();
            e.0 += 1.0;
            e.1 += o.d;
        }
        let groups = acc
            .into_iter()
            .map(|((length, interface, user), (n, sum))| Group {
                length,
                interface,
                user,
                n,
                sum,
            })
            .collect();
        Ok(DistExpModel {
            n_users,
            lkj_shape: Self::DEFAULT_LKJ_SHAPE,
            groups,
            out_of_support,
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
        l.scalar("mu_l", Domain::Real)
            .scalar("beta_l", Domain::Real)
            .scalar("mu_bi", Domain::Real)
            .scalar("sigma_bi", Domain::Positive)
            .vector("bi_raw", 2, Domain::Real)
            .interaction("")
            .scalar("mu_u", Domain::Real)
            .scalar("sigma_u", Domain::Positive)
            .vector("z_u", self.n_users, Domain::Real);
        l
    }

    pub fn log_posterior_params(&self, p: &DistExpParams) -> f64 {
        if self.out_of_support
            || !(p.sigma_bi > 0.0)
            || !(p.sigma_u > 0.0)
            || p.phi.sigma.iter().any(|&s| !(s > 0.0))
            || p.z_u.len() != self.n_users
        {
            return f64::NEG_INFINITY;
        }
        let mut lp = sum_std_normal(&[p.mu_l, p.beta_l, p.mu_bi, p.mu_u])
            + half_normal_logpdf(p.sigma_bi, 0.5)
            + sum_std_normal(&p.bi_raw)
            + p.phi.sigma.iter().map(|&s| half_normal_logpdf(s, 0.5)).sum::<f64>()
            + p.phi.log_prior_z_rho(self.lkj_shape)
            + exponential_rate_logpdf(p.sigma_u, 0.5)
            + sum_std_normal(&p.z_u);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let phi = p.phi.phi();
        let beta_i = [p.mu_bi + p.sigma_bi * p.bi_raw[0], p.mu_bi + p.sigma_bi * p.bi_raw[1]];
        for g in &self.groups {
            let eta = p.mu_l
                + p.beta_l * g.length as f64
                + beta_i[g.interface]
                + phi[g.length][g.interface]
                + p.mu_u
                + p.sigma_u * p.z_u[g.user];
            // Σ (−η − D e^{−η})
            lp += -g.n * eta - g.sum * (-eta).exp();
        }
        lp
    }

    fn cell_users(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut m: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for g in &self.groups {
            m.entry((g.length, g.interface)).or_default().push(g.user);
        }
        m
    }
}

impl Model for DistExpModel {
    fn name(&self) -> &str {
        "dist-exp"
    }

    fn param_names(&self) -> Vec<String> {
        self.layout().names
    }

    fn domains(&self) -> Vec<Domain> {
        self.layout().domains
    }

    fn log_posterior(&self, theta: &[f64]) -> f64 {
        self.log_posterior_params(&DistExpParams::unpack(theta, self.n_users))
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut p = DistExpParams::zero(self.n_users);
        let (n, sum) = self.groups.iter().fold((0.0, 0.0), |(n, s), g| (n + g.n, s + g.sum));
        p.mu_l = (sum / n).max(1e-3).ln();
        p.pack()
    }

    /// Per observed cell: `mean[cell]` and `sd[cell]` (equal for an
    /// exponential) averaged over that cell's users, and the population
    /// log-scale predictor `eta[cell]`. `interface[..]` averages the
    /// population predictor over the observed lengths.
    fn derived(&self, theta: &[f64]) -> Vec<Derived> {
        let p = DistExpParams::unpack(theta, self.n_users);
        let mut out = Vec::new();
        let mut by_interface: [Vec<f64>; 2] = Default::default();
        for ((l, i), users) in self.cell_users() {
            let label = cell_label(l, i);
            let mean = users.iter().map(|&u| p.eta(l, i, u).exp()).sum::<f64>() / users.len() as f64;
            let eta = p.eta_population(l, i);
            out.push(Derived::new(format!("mean[{label}]"), mean));
            out.push(Derived::new(format!("sd[{label}]"), mean));
            out.push(Derived::new(format!("eta[{label}]"), eta));
            by_interface[i].push(eta);
        }
        for (i, etas) in by_interface.iter().enumerate() {
            if !etas.is_empty() {
                let v = etas.iter().sum::<f64>() / etas.len() as f64;
                out.push(Derived::new(format!("interface[{}]", interface_label(i)), v));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_datum_likelihood() {
        let lambda: f64 = 3.5;
        let m = DistExpModel::new(
            &[DistObs {
                d: lambda,
                length: 0,
                interface: 0,
                user: 0,
            }],
            1,
        )
        .unwrap();
        let mut p = DistExpParams::zero(1);
        p.mu_l = lambda.ln();
        let with = m.log_posterior_params(&p);
        // A zero distance contributes only −η, so the difference isolates
        // −D/λ = −1; the −log λ term is shared.
        let m0 = DistExpModel::new(
            &[DistObs {
                d: 0.0,
                length: 0,
                interface: 0,
                user: 0,
            }],
            1,
        )
        .unwrap();
        assert!((with - m0.log_posterior_params(&p) - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn negative_distance_is_out_of_support() {
        let m = DistExpModel::new(
            &[DistObs {
                d: -1.0,
                length: 0,
                interface: 1,
                user: 0,
            }],
            1,
        )
        .unwrap();
        assert_eq!(m.log_posterior(&m.initial_point()), f64::NEG_INFINITY);
    }

    #[test]
    fn layout_round_trips() {
        let data: Vec<DistObs> = (0..8)
            .map(|i| DistObs {
                d: i as f64,
                length: i % 2,
                interface: (i / 2) % 2,
                user: i % 4,
            })
            .collect();
        let m = DistExpModel::new(&data, 4).unwrap();
        let init = m.initial_point();
        assert_eq!(init.len(), m.dim());
        assert_eq!(DistExpParams::unpack(&init, 4).pack(), init);
        assert!(m.log_posterior(&init).is_finite());
        let names: Vec<String> = m.derived(&init).into_iter().map(|d| d.name).collect();
        assert!(names.contains(&"interface[two_phase]".to_string()));
    }
}
