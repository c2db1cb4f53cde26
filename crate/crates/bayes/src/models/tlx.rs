//! Ordinal regression of binned workload scores on length, interface and
//! their interaction.

use serde::{Deserialize, Serialize};

use super::{
    cell_label, check_cell, sum_std_normal, Cursor, Derived, Domain, InteractionParams, Layout, Model, ModelError,
};
use crate::dist::{exponential_rate_logpdf, ordered_transform, ordlogit_logpmf_unchecked, LOGISTIC_SD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlxObs {
    /// Ordinal category in `0..K`.
    pub y: usize,
    pub length: usize,
    pub interface: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlxParams {
    pub alpha: f64,
    pub mu_l: f64,
    pub beta_l: f64,
    pub mu_bi: f64,
    pub sigma_bi: f64,
    pub bi_raw: [f64; 2],
    pub phi: InteractionParams,
    /// Unconstrained cutpoint increments; `K − 1` values.
    pub z_tau: Vec<f64>,
}

impl TlxParams {
    pub fn zero(k: usize) -> Self {
        TlxParams {
            alpha: 0.0,
            mu_l: 0.0,
            beta_l: 0.0,
            mu_bi: 0.0,
            sigma_bi: 0.5,
            bi_raw: [0.0; 2],
            phi: InteractionParams::zero(),
            z_tau: vec![0.0; k - 1],
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut v = vec![self.alpha, self.mu_l, self.beta_l, self.mu_bi, self.sigma_bi];
        v.extend_from_slice(&self.bi_raw);
        self.phi.push(&mut v);
        v.extend_from_slice(&self.z_tau);
        v
    }

    pub fn unpack(theta: &[f64], k: usize) -> Self {
        let mut c = Cursor::new(theta);
        TlxParams {
            alpha: c.next(),
            mu_l: c.next(),
            beta_l: c.next(),
            mu_bi: c.next(),
            sigma_bi: c.next(),
            bi_raw: c.array(),
            phi: c.interaction(),
            z_tau: c.take(k - 1).to_vec(),
        }
    }

    pub fn beta_i(&self) -> [f64; 2] {
        [
            self.mu_bi + self.sigma_bi * self.bi_raw[0],
            self.mu_bi + self.sigma_bi * self.bi_raw[1],
        ]
    }

    /// Latent predictor for a (length, interface) cell.
    pub fn eta(&self, length: usize, interface: usize) -> f64 {
        let phi = self.phi.phi();
        self.alpha + self.mu_l + self.beta_l * length as f64 + self.beta_i()[interface] + phi[length][interface]
    }

    pub fn cutpoints(&self) -> Vec<f64> {
        ordered_transform(&self.z_tau).0
    }
}

/// Observations are reduced to counts per (length, interface, category).
#[derive(Debug, Clone)]
pub struct TlxModel {
    k: usize,
    lkj_shape: f64,
    counts: [[Vec<u64>; 2]; 2],
    cells: [[bool; 2]; 2],
}

impl TlxModel {
    pub const DEFAULT_LKJ_SHAPE: f64 = 2.0;

    pub fn new(data: &[TlxObs], k: usize) -> Result<Self, ModelError> {
        if k < 2 {
            return Err(ModelError::TooFewCategories { k, min: 2 });
        }
        if data.is_empty() {
            return Err(ModelError::NoData);
        }
        let mut counts: [[Vec<u64>; 2]; 2] = Default::default();
        for row in counts.iter_mut() {
            for c in row.iter_mut() {
                *c = vec![0; k];
            }
        }
        let mut cells = [[false; 2]; 2];
        for (i, o) in data.iter().enumerate() {
            check_cell(i, o.length, o.interface)?;
            if o.y >= k {
                return Err(ModelError::BadObservation {
                    index: i,
                    message: format!("category {} outside 0..{k}", o.y),
                });
            }
            counts[o.length][o.interface][o.y] += 1;
            cells[o.length][o.interface] = true;
        }
        Ok(TlxModel {
            k,
            lkj_shape: Self::DEFAULT_LKJ_SHAPE,
            counts,
            cells,
        })
    }

    pub fn with_lkj_shape(mut self, shape: f64) -> Self {
        self.lkj_shape = shape;
        self
    }

    fn layout(&self) -> Layout {
        let mut l = Layout::default();
        l.scalar("alpha", Domain::Real)
            .scalar("mu_l", Domain::Real)
            .scalar("beta_l", Domain::Real)
            .scalar("mu_bi", Domain::Real)
            .scalar("sigma_bi", Domain::Positive)
            .vector("bi_raw", 2, Domain::Real)
            .interaction("")
            .vector("z_tau", self.k - 1, Domain::Real);
        l
    }

    pub fn categories(&self) -> usize {
        self.k
    }

    pub fn log_posterior_params(&self, p: &TlxParams) -> f64 {
        if !(p.sigma_bi > 0.0) || p.phi.sigma.iter().any(|&s| !(s > 0.0)) || p.z_tau.len() != self.k - 1 {
            return f64::NEG_INFINITY;
        }
        let lp = sum_std_normal(&[p.alpha, p.mu_l, p.beta_l, p.mu_bi])
            + exponential_rate_logpdf(p.sigma_bi, 1.0)
            + sum_std_normal(&p.bi_raw)
            + p.phi.sigma.iter().map(|&s| exponential_rate_logpdf(s, 1.0)).sum::<f64>()
            + p.phi.log_prior_z_rho(self.lkj_shape)
            + sum_std_normal(&p.z_tau);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp + self.log_likelihood_params(p)
    }

    /// Ordered-logit likelihood alone.
    pub fn log_likelihood_params(&self, p: &TlxParams) -> f64 {
        let mut lp = 0.0;
        let tau = p.cutpoints();
        for l in 0..2 {
            for i in 0..2 {
                let eta = p.eta(l, i);
                for (y, &n) in self.counts[l][i].iter().enumerate() {
                    if n > 0 {
                        lp += n as f64 * ordlogit_logpmf_unchecked(y, eta, &tau);
                    }
                }
            }
        }
        lp
    }
}

impl Model for TlxModel {
    fn name(&self) -> &str {
        "tlx"
    }

    fn param_names(&self) -> Vec<String> {
        self.layout().names
    }

    fn domains(&self) -> Vec<Domain> {
        self.layout().domains
    }

    fn log_posterior(&self, theta: &[f64]) -> f64 {
        self.log_posterior_params(&TlxParams::unpack(theta, self.k))
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut p = TlxParams::zero(self.k);
        // Cutpoints spread around zero.
        let k = self.k;
        p.z_tau = (0..k - 1)
            .map(|j| if j == 0 { -(k as f64 - 2.0) / 2.0 } else { 0.0 })
            .collect();
        p.pack()
    }

    /// `latent[cell]` for each observed cell; `sd[cell]` is the standard
    /// logistic spread, the scale of the latent variable.
    fn derived(&self, theta: &[f64]) -> Vec<Derived> {
        let p = TlxParams::unpack(theta, self.k);
        let mut out = Vec::new();
        for l in 0..2 {
            for i in 0..2 {
                if self.cells[l][i] {
                    let label = cell_label(l, i);
                    out.push(Derived::new(format!("latent[{label}]"), p.eta(l, i)));
                    out.push(Derived::new(format!("sd[{label}]"), LOGISTIC_SD));
                }
            }
        }
        out
    }
}
