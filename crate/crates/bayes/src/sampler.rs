//! Random-walk Metropolis: a component-wise sweep, followed by joint
//! Gaussian moves whose covariance is learned during burn-in.
//!
//! Chains move in an unconstrained space: positive parameters through
//! `exp`, correlations through `tanh`, with the log-Jacobian added to the
//! target. Proposal scales and the joint covariance adapt during burn-in
//! only and are frozen for the kept iterations, so the kept draws come from
//! a fixed Markov kernel. Each chain has its own RNG stream derived from the
//! seed, which makes results independent of thread scheduling.
//!
//! The joint moves matter for hierarchical models whose intercepts enter
//! only through their sum: single-coordinate steps cannot travel along
//! such ridges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::draws::{ChainDraws, Draws};
use crate::models::{Domain, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub burn_in: usize,
    pub iterations: usize,
    pub seed: u64,
    pub adapt: bool,
    /// Per-parameter acceptance band the adaptation steers into.
    pub target_acceptance: (f64, f64),
    /// Half-width of the uniform jitter applied to the unconstrained start
    /// of each chain.
    pub init_jitter: f64,
    pub adapt_batch: usize,
    /// Joint moves per iteration once a covariance estimate exists. `None`
    /// picks one per ten parameters, between 1 and 10; `Some(0)` disables
    /// them.
    #[serde(default)]
    pub joint_moves: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            burn_in: 5_000,
            iterations: 20_000,
            seed: 0,
            adapt: true,
            target_acceptance: (0.25, 0.40),
            init_jitter: 0.5,
            adapt_batch: 50,
            joint_moves: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("log posterior is not finite at the initial point")]
    InitNotFinite,
    #[error("initial value {value} of `{name}` is outside its domain")]
    InitOutsideDomain { name: String, value: f64 },
    #[error("initial point has {got} values, model has {expected} parameters")]
    WrongDimension { got: usize, expected: usize },
    #[error("step scales must be positive and one per parameter")]
    BadStepScales,
    #[error("need at least one chain and one kept iteration")]
    Empty,
}

pub fn to_unconstrained(domain: Domain, x: f64) -> f64 {
    match domain {
        Domain::Real => x,
        Domain::Positive => x.ln(),
        Domain::Correlation => x.atanh(),
    }
}

pub fn to_constrained(domain: Domain, u: f64) -> f64 {
    match domain {
        Domain::Real => u,
        Domain::Positive => u.exp(),
        Domain::Correlation => u.tanh(),
    }
}

/// `log |dx/du|` of [`to_constrained`].
pub fn log_jacobian(domain: Domain, u: f64) -> f64 {
    match domain {
        Domain::Real => 0.0,
        Domain::Positive => u,
        // 1 − tanh²(u) = 4 / (e^u + e^−u)²
        Domain::Correlation => {
            let a = u.abs();
            2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
        }
    }
}

/// Samples `model` starting from `init` (constrained values). Without
/// explicit `step_scales` every proposal starts at 0.5 in unconstrained
/// units.
pub fn rw_metropolis<M: Model + ?Sized>(
    model: &M,
    init: &[f64],
    step_scales: Option<&[f64]>,
    cfg: &SamplerConfig,
) -> Result<Draws, SamplerError> {
    let names = model.param_names();
    let domains = model.domains();
    if init.len() != names.len() {
        return Err(SamplerError::WrongDimension {
            got: init.len(),
            expected: names.len(),
        });
    }
    if cfg.chains == 0 || cfg.iterations == 0 {
        return Err(SamplerError::Empty);
    }
    for ((name, d), &x) in names.iter().zip(&domains).zip(init) {
        if !d.contains(x) {
            return Err(SamplerError::InitOutsideDomain {
                name: name.clone(),
                value: x,
            });
        }
    }
    if !model.log_posterior(init).is_finite() {
        return Err(SamplerError::InitNotFinite);
    }
    let scales = match step_scales {
        Some(s) if s.len() == init.len() && s.iter().all(|&v| v > 0.0 && v.is_finite()) => s.to_vec(),
        Some(_) => return Err(SamplerError::BadStepScales),
        None => vec![0.5; init.len()],
    };
    let u0: Vec<f64> = init.iter().zip(&domains).map(|(&x, &d)| to_unconstrained(d, x)).collect();
    let chains: Vec<ChainDraws> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(model, &domains, &u0, &scales, cfg, c))
        .collect();
    Ok(Draws { names, chains })
}

/// [`rw_metropolis`] from the model's own initial point.
pub fn sample<M: Model + ?Sized>(model: &M, cfg: &SamplerConfig) -> Result<Draws, SamplerError> {
    rw_metropolis(model, &model.initial_point(), None, cfg)
}

fn run_chain<M: Model + ?Sized>(
    model: &M,
    domains: &[Domain],
    u0: &[f64],
    scales: &[f64],
    cfg: &SamplerConfig,
    chain: usize,
) -> ChainDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let p = u0.len();
    let target = |u: &[f64], x: &mut Vec<f64>| -> f64 {
        x.clear();
        x.extend(u.iter().zip(domains).map(|(&v, &d)| to_constrained(d, v)));
        let lp = model.log_posterior(x);
        let lj: f64 = u.iter().zip(domains).map(|(&v, &d)| log_jacobian(d, v)).sum();
        finite_or_neg_inf(lp + lj)
    };

    let mut x = Vec::with_capacity(p);
    let mut u = u0.to_vec();
    let mut lp = f64::NEG_INFINITY;
    if cfg.init_jitter > 0.0 {
        for _ in 0..50 {
            let cand: Vec<f64> = u0
                .iter()
                .map(|&v| v + rng.random_range(-cfg.init_jitter..=cfg.init_jitter))
                .collect();
            let l = target(&cand, &mut x);
            if l.is_finite() {
                u = cand;
                lp = l;
                break;
            }
        }
    }
    if !lp.is_finite() {
        u = u0.to_vec();
        lp = target(&u, &mut x);
    }
    x.clear();
    x.extend(u.iter().zip(domains).map(|(&v, &d)| to_constrained(d, v)));
    let mut lj: Vec<f64> = u.iter().zip(domains).map(|(&v, &d)| log_jacobian(d, v)).collect();
    let mut model_lp = lp - lj.iter().sum::<f64>();

    let mut log_scale: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let mut batch_accepts = vec![0u32; p];
    let mut batch_len = 0usize;
    let mut batch_no = 0usize;
    let mut kept_accepts = vec![0u64; p];
    let mut values = Vec::with_capacity(cfg.iterations * p);
    let n_joint = cfg.joint_moves.unwrap_or((p / 10).clamp(1, 10));
    let mut joint = JointProposal::new(p);

    for it in 0..cfg.burn_in + cfg.iterations {
        for j in 0..p {
            let step: f64 = rng.sample(StandardNormal);
            let old_u = u[j];
            let old_x = x[j];
            let old_lj = lj[j];
            u[j] = old_u + log_scale[j].exp() * step;
            x[j] = to_constrained(domains[j], u[j]);
            lj[j] = log_jacobian(domains[j], u[j]);
            let new_model_lp = finite_or_neg_inf(model.log_posterior(&x));
            let delta = (new_model_lp - model_lp) + (lj[j] - old_lj);
            let accept = new_model_lp.is_finite() && (delta >= 0.0 || rng.random::<f64>().ln() < delta);
            if accept {
                model_lp = new_model_lp;
                if it < cfg.burn_in {
                    batch_accepts[j] += 1;
                } else {
                    kept_accepts[j] += 1;
                }
            } else {
                u[j] = old_u;
                x[j] = old_x;
                lj[j] = old_lj;
            }
        }
        if let Some(l) = joint.chol.take() {
            for _ in 0..n_joint {
                let scale = joint.log_scale.exp();
                let xi: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                let cand: Vec<f64> = (0..p)
                    .map(|i| u[i] + scale * (0..=i).map(|k| l[i * p + k] * xi[k]).sum::<f64>())
                    .collect();
                let cand_x: Vec<f64> = cand.iter().zip(domains).map(|(&v, &d)| to_constrained(d, v)).collect();
                let cand_lj: Vec<f64> = cand.iter().zip(domains).map(|(&v, &d)| log_jacobian(d, v)).collect();
                let cand_lp = finite_or_neg_inf(model.log_posterior(&cand_x));
                let delta = (cand_lp - model_lp) + (cand_lj.iter().sum::<f64>() - lj.iter().sum::<f64>());
                let accept = cand_lp.is_finite() && (delta >= 0.0 || rng.random::<f64>().ln() < delta);
                if accept {
                    u = cand;
                    x = cand_x;
                    lj = cand_lj;
                    model_lp = cand_lp;
                }
                if it < cfg.burn_in {
                    joint.adapt_scale(accept);
                }
            }
            joint.chol = Some(l);
        }
        if it < cfg.burn_in && n_joint > 0 && it >= cfg.burn_in / 4 {
            joint.observe(&u);
        }
        if it < cfg.burn_in {
            batch_len += 1;
            if batch_len == cfg.adapt_batch.max(1) {
                batch_no += 1;
                if cfg.adapt {
                    let delta = (1.0 / (batch_no as f64).sqrt()).clamp(0.01, 0.5);
                    for j in 0..p {
                        let rate = batch_accepts[j] as f64 / batch_len as f64;
                        if rate < cfg.target_acceptance.0 {
                            log_scale[j] -= delta;
                        } else if rate > cfg.target_acceptance.1 {
                            log_scale[j] += delta;
                        }
                    }
                }
                batch_accepts.iter_mut().for_each(|a| *a = 0);
                batch_len = 0;
                if n_joint > 0 && cfg.adapt {
                    joint.refresh();
                }
            }
        } else {
            values.extend_from_slice(&x);
        }
    }
    ChainDraws {
        values,
        acceptance: kept_accepts
            .iter()
            .map(|&a| a as f64 / cfg.iterations as f64)
            .collect(),
        step_scales: log_scale.iter().map(|s| s.exp()).collect(),
    }
}

/// Covariance-shaped joint proposal. The covariance is the running
/// estimate over the later three quarters of burn-in, refreshed at each
/// adaptation batch; the overall scale steers acceptance toward 0.234.
struct JointProposal {
    p: usize,
    n: usize,
    mean: Vec<f64>,
    /// Sum of centred outer products, row-major `p × p`.
    comoment: Vec<f64>,
    /// Lower Cholesky factor of the proposal covariance.
    chol: Option<Vec<f64>>,
    log_scale: f64,
    steps: usize,
}

impl JointProposal {
    const TARGET: f64 = 0.234;

    fn new(p: usize) -> Self {
        JointProposal {
            p,
            n: 0,
            mean: vec![0.0; p],
            comoment: vec![0.0; p * p],
            chol: None,
            log_scale: (2.38 / (p as f64).sqrt()).ln(),
            steps: 0,
        }
    }

    fn observe(&mut self, u: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        let before: Vec<f64> = u.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&before) {
            *m += d / n;
        }
        for i in 0..self.p {
            let after_i = u[i] - self.mean[i];
            for j in 0..=i {
                self.comoment[i * self.p + j] += before[j] * after_i;
            }
        }
    }

    fn refresh(&mut self) {
        let p = self.p;
        if self.n < 2 * p + 20 {
            return;
        }
        let mut cov = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                cov[i * p + j] = self.comoment[i * p + j] / (self.n - 1) as f64;
            }
        }
        let mut jitter = 1e-10;
        for _ in 0..12 {
            let mut c = cov.clone();
            for i in 0..p {
                c[i * p + i] += jitter * (1.0 + cov[i * p + i]);
            }
            if let Some(l) = cholesky_lower(&c, p) {
                self.chol = Some(l);
                return;
            }
            jitter *= 10.0;
        }
    }

    fn adapt_scale(&mut self, accepted: bool) {
        self.steps += 1;
        let gain = (1.0 / (self.steps as f64).sqrt()).min(0.05);
        self.log_scale += gain * (f64::from(u8::from(accepted)) - Self::TARGET);
    }
}

/// Lower Cholesky factor of the symmetric matrix whose lower triangle is
/// given row-major; `None` unless positive definite.
fn cholesky_lower(a: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * p + k] * l[j * p + k]).sum();
            if i == j {
                let d = a[i * p + i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * p + i] = d.sqrt();
            } else {
                l[i * p + j] = (a[i * p + j] - s) / l[j * p + j];
            }
        }
    }
    Some(l)
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}
