//! Log densities used by the models.
//!
//! Conventions, side by side:
//! - `gamma_logpdf(x, shape, rate)`: shape/rate, mean `shape / rate`.
//! - `exponential_rate_logpdf(x, rate)`: mean `1 / rate`; used for priors
//!   written `Exponential(r)`.
//! - `exponential_scale_logpdf(x, scale)`: mean `scale`; used for the
//!   per-option distance likelihood, which is parameterized by its mean.
//!
//! Outside their support the densities return `f64::NEG_INFINITY`.

use std::f64::consts::{LN_2, PI};

use statrs::function::beta::ln_beta;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("cutpoints are not strictly ascending")]
    CutpointsNotAscending,
    #[error("category {y} outside 0..{k}")]
    CategoryOutOfRange { y: usize, k: usize },
    #[error("correlation {0} outside (-1, 1)")]
    CorrelationOutOfRange(f64),
    #[error("need at least one cutpoint")]
    NoCutpoints,
}

pub fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

pub fn std_normal_logpdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Half-normal with scale `sigma` on `[0, ∞)`.
pub fn half_normal_logpdf(x: f64, sigma: f64) -> f64 {
    if x < 0.0 || !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    LN_2 + normal_logpdf(x, 0.0, sigma)
}

pub fn exponential_rate_logpdf(x: f64, rate: f64) -> f64 {
    if x < 0.0 || !(rate > 0.0) {
        return f64::NEG_INFINITY;
    }
    rate.ln() - rate * x
}

pub fn exponential_scale_logpdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 || !(scale > 0.0) {
        return f64::NEG_INFINITY;
    }
    -scale.ln() - x / scale
}

pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) || !(shape > 0.0) || !(rate > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `log Φ(x)` for the standard normal CDF, accurate far into the lower tail.
pub fn log_ndtr(x: f64) -> f64 {
    if x > 6.0 {
        (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -20.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Normal restricted to `[0, ∞)`.
pub fn truncated_normal_lower0_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x < 0.0 || !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    normal_logpdf(x, mu, sigma) - log_ndtr(mu / sigma)
}

/// Cutpoints from unconstrained values: the first is taken as is and each
/// later one adds `exp` of its value to the previous. Returns the cutpoints
/// and `log |dτ/dz|`.
pub fn ordered_transform(z: &[f64]) -> (Vec<f64>, f64) {
    let mut tau = Vec::with_capacity(z.len());
    let mut log_jac = 0.0;
    for (k, &zk) in z.iter().enumerate() {
        if k == 0 {
            tau.push(zk);
        } else {
            tau.push(tau[k - 1] + zk.exp());
            log_jac += zk;
        }
    }
    (tau, log_jac)
}

pub fn ordered_transform_inverse(tau: &[f64]) -> Result<Vec<f64>, DomainError> {
    let mut z = Vec::with_capacity(tau.len());
    for (k, &t) in tau.iter().enumerate() {
        if k == 0 {
            z.push(t);
        } else {
            let gap = t - tau[k - 1];
            if !(gap > 0.0) {
                return Err(DomainError::CutpointsNotAscending);
            }
            z.push(gap.ln());
        }
    }
    Ok(z)
}

/// `log(σ(b) − σ(a))` for `b > a`.
fn log_sigmoid_diff(b: f64, a: f64) -> f64 {
    a + (b - a).exp_m1().ln() - softplus(a) - softplus(b)
}

/// Ordered-logistic log-probability of category `y ∈ 0..=K−1` given latent
/// `eta` and `K − 1` ascending cutpoints.
pub fn ordlogit_logpmf(y: usize, eta: f64, tau: &[f64]) -> Result<f64, DomainError> {
    if tau.is_empty() {
        return Err(DomainError::NoCutpoints);
    }
    if tau.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DomainError::CutpointsNotAscending);
    }
    let k = tau.len() + 1;
    if y >= k {
        return Err(DomainError::CategoryOutOfRange { y, k });
    }
    Ok(ordlogit_logpmf_unchecked(y, eta, tau))
}

pub(crate) fn ordlogit_logpmf_unchecked(y: usize, eta: f64, tau: &[f64]) -> f64 {
    let last = tau.len();
    if y == 0 {
        log_sigmoid(tau[0] - eta)
    } else if y == last {
        -softplus(tau[last - 1] - eta)
    } else {
        log_sigmoid_diff(tau[y] - eta, tau[y - 1] - eta)
    }
}

/// LKJ density of a 2×2 correlation matrix with off-diagonal `rho`, as a
/// density over `rho`: `(1 − ρ²)^(η−1) / (2^(2η−1) B(η, η))`.
pub fn lkj_corr_logpdf_2x2(rho: f64, shape: f64) -> Result<f64, DomainError> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(DomainError::CorrelationOutOfRange(rho));
    }
    let norm = -(2.0 * shape - 1.0) * LN_2 - ln_beta(shape, shape);
    Ok((shape - 1.0) * (1.0 - rho * rho).ln() + norm)
}

/// `π / √3`, the standard deviation of the standard logistic distribution.
pub const LOGISTIC_SD: f64 = PI / 1.732_050_807_568_877_2;
