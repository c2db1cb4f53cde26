//! Log-posterior definitions.
//!
//! Every model takes its parameters in the constrained space (scales are
//! positive, correlations lie in (−1, 1)) as a flat vector whose layout is
//! given by [`Model::param_names`]. Values outside a parameter's domain, or
//! data outside the likelihood's support, evaluate to `−∞`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod cumdist;
pub mod dist_exp;
pub mod meanvar;
pub mod time_gamma;
pub mod tlx;

pub use cumdist::{CumDistModel, CumDistObs, CumDistParams};
pub use dist_exp::{DistExpModel, DistExpParams, DistObs};
pub use meanvar::{MeanVarModel, MeanVarParams, MeanVarPart};
pub use time_gamma::{TimeGammaModel, TimeGroup};
pub use tlx::{TlxModel, TlxObs, TlxParams};

use crate::dist::{lkj_corr_logpdf_2x2, std_normal_logpdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Real,
    Positive,
    /// Open interval (−1, 1).
    Correlation,
}

impl Domain {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Domain::Real => x.is_finite(),
            Domain::Positive => x > 0.0 && x.is_finite(),
            Domain::Correlation => x > -1.0 && x < 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("observation {index}: {message}")]
    BadObservation { index: usize, message: String },
    #[error("need at least {min} ordinal categories, got {k}")]
    TooFewCategories { k: usize, min: usize },
    #[error("no observations")]
    NoData,
    #[error("parameter vector has length {got}, model expects {expected}")]
    WrongDimension { got: usize, expected: usize },
}

/// A derived quantity evaluated at one parameter draw, e.g. `mean[long_text]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    pub name: String,
    pub value: f64,
}

impl Derived {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Derived {
            name: name.into(),
            value,
        }
    }
}

pub trait Model: Sync {
    fn name(&self) -> &str;
    fn param_names(&self) -> Vec<String>;
    fn domains(&self) -> Vec<Domain>;
    fn log_posterior(&self, theta: &[f64]) -> f64;
    /// A point inside every domain with finite posterior density, used to
    /// start the chains.
    fn initial_point(&self) -> Vec<f64>;

    /// Quantities reported per draw. Names share a prefix before `[` when
    /// they are comparable across groups.
    fn derived(&self, _theta: &[f64]) -> Vec<Derived> {
        Vec::new()
    }

    fn dim(&self) -> usize {
        self.param_names().len()
    }
}

/// A model from a closure, for ad-hoc targets.
pub struct FnModel<F> {
    name: String,
    names: Vec<String>,
    domains: Vec<Domain>,
    init: Vec<f64>,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(name: impl Into<String>, names: Vec<String>, domains: Vec<Domain>, init: Vec<f64>, f: F) -> Self {
        assert_eq!(names.len(), domains.len());
        assert_eq!(names.len(), init.len());
        FnModel {
            name: name.into(),
            names,
            domains,
            init,
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn name(&self) -> &str {
        &self.name
    }
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
    fn domains(&self) -> Vec<Domain> {
        self.domains.clone()
    }
    fn log_posterior(&self, theta: &[f64]) -> f64 {
        if theta.iter().zip(&self.domains).any(|(&x, d)| !d.contains(x)) {
            return f64::NEG_INFINITY;
        }
        (self.f)(theta)
    }
    fn initial_point(&self) -> Vec<f64> {
        self.init.clone()
    }
}

/// Appends parameter names and domains block by block.
#[derive(Debug, Default, Clone)]
pub(crate) struct Layout {
    pub names: Vec<String>,
    pub domains: Vec<Domain>,
}

impl Layout {
    pub fn scalar(&mut self, name: &str, domain: Domain) -> &mut Self {
        self.names.push(name.to_string());
        self.domains.push(domain);
        self
    }

    pub fn vector(&mut self, name: &str, len: usize, domain: Domain) -> &mut Self {
        for i in 0..len {
            self.names.push(format!("{name}[{i}]"));
            self.domains.push(domain);
        }
        self
    }

    pub fn interaction(&mut self, prefix: &str) -> &mut Self {
        self.vector(&format!("z_phi{prefix}"), 4, Domain::Real)
            .vector(&format!("sigma_phi{prefix}"), 4, Domain::Positive)
            .scalar(&format!("rho{prefix}"), Domain::Correlation)
    }
}

/// Sequential reader over a flat parameter vector.
pub(crate) struct Cursor<'a> {
    theta: &'a [f64],
    at: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(theta: &'a [f64]) -> Self {
        Cursor { theta, at: 0 }
    }
    pub fn next(&mut self) -> f64 {
        let v = self.theta[self.at];
        self.at += 1;
        v
    }
    pub fn take(&mut self, n: usize) -> &'a [f64] {
        let s = &self.theta[self.at..self.at + n];
        self.at += n;
        s
    }
    pub fn array<const N: usize>(&mut self) -> [f64; N] {
        self.take(N).try_into().expect("length checked by take")
    }
    pub fn interaction(&mut self) -> InteractionParams {
        InteractionParams {
            z: self.array(),
            sigma: self.array(),
            rho: self.next(),
        }
    }
}

/// Length × interface interaction, `φ = L_Ω (σ ⊙ z)` with `L_Ω` the
/// Cholesky factor of the 2×2 correlation matrix with off-diagonal `rho`.
/// Arrays are row-major over (length, interface).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionParams {
    pub z: [f64; 4],
    pub sigma: [f64; 4],
    pub rho: f64,
}

impl InteractionParams {
    pub fn zero() -> Self {
        InteractionParams {
            z: [0.0; 4],
            sigma: [0.5; 4],
            rho: 0.0,
        }
    }

    pub fn phi(&self) -> [[f64; 2]; 2] {
        let m = |i: usize, j: usize| self.sigma[2 * i + j] * self.z[2 * i + j];
        let c = (1.0 - self.rho * self.rho).sqrt();
        [
            [m(0, 0), m(0, 1)],
            [self.rho * m(0, 0) + c * m(1, 0), self.rho * m(0, 1) + c * m(1, 1)],
        ]
    }

    pub(crate) fn push(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.z);
        out.extend_from_slice(&self.sigma);
        out.push(self.rho);
    }

    /// Prior on `z` (standard normal) and `rho` (LKJ); the caller adds the
    /// prior on `sigma`. `−∞` when `rho` is out of range.
    pub(crate) fn log_prior_z_rho(&self, lkj_shape: f64) -> f64 {
        match lkj_corr_logpdf_2x2(self.rho, lkj_shape) {
            Ok(lkj) => lkj + self.z.iter().map(|&z| std_normal_logpdf(z)).sum::<f64>(),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

pub(crate) fn check_cell(index: usize, length: usize, interface: usize) -> Result<(), ModelError> {
    if length > 1 || interface > 1 {
        return Err(ModelError::BadObservation {
            index,
            message: format!("length {length} / interface {interface} must be 0 or 1"),
        });
    }
    Ok(())
}

/// Condition label for a (length, interface) cell.
pub fn cell_label(length: usize, interface: usize) -> String {
    format!("{}_{}", length_label(length), interface_label(interface))
}

pub fn length_label(length: usize) -> &'static str {
    if length == 0 {
        "short"
    } else {
        "long"
    }
}

pub fn interface_label(interface: usize) -> &'static str {
    if interface == 0 {
        "text"
    } else {
        "two_phase"
    }
}

pub(crate) fn sum_std_normal(xs: &[f64]) -> f64 {
    xs.iter().map(|&x| std_normal_logpdf(x)).sum()
}
