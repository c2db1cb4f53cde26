//! Posterior summaries: highest density intervals, histogram modes,
//! direction and ROPE probabilities, and contrasts between quantities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::split_rhat;
use crate::draws::Draws;

pub const DEFAULT_HDI_MASS: f64 = 0.94;
pub const DEFAULT_ROPE: (f64, f64) = (-1.0, 1.0);
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SummaryError {
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("interval mass {0} outside (0, 1]")]
    BadMass(f64),
    #[error("samples contain a non-finite value")]
    NonFinite,
    #[error("cannot contrast `{a}` with `{b}`: different quantities")]
    MismatchedQuantities { a: String, b: String },
    #[error("ROPE bounds ({0}, {1}) are not ordered")]
    BadRope(f64, f64),
}

fn sorted_checked(samples: &[f64]) -> Result<Vec<f64>, SummaryError> {
    if samples.len() < MIN_SAMPLES {
        return Err(SummaryError::TooFewSamples {
            got: samples.len(),
            min: MIN_SAMPLES,
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(SummaryError::NonFinite);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Linear interpolation between order statistics.
fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Shortest interval spanning `⌈mass·n⌉` sorted samples.
pub fn hdi(samples: &[f64], mass: f64) -> Result<(f64, f64), SummaryError> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(SummaryError::BadMass(mass));
    }
    let s = sorted_checked(samples)?;
    Ok(hdi_sorted(&s, mass))
}

fn hdi_sorted(s: &[f64], mass: f64) -> (f64, f64) {
    let n = s.len();
    let m = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let (mut best, mut width) = (0, f64::INFINITY);
    for i in 0..=n - m {
        let w = s[i + m - 1] - s[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    (s[best], s[best + m - 1])
}

/// Midpoint of the fullest histogram bin, with Freedman–Diaconis bin width.
/// Falls back to the median when the interquartile range is zero.
pub fn mode_estimate(samples: &[f64]) -> Result<f64, SummaryError> {
    let s = sorted_checked(samples)?;
    Ok(mode_sorted(&s))
}

fn mode_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    let iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
    let (lo, hi) = (s[0], s[n - 1]);
    let width = 2.0 * iqr / (n as f64).cbrt();
    if !(width > 0.0) || !(hi > lo) {
        return quantile_sorted(s, 0.5);
    }
    let bins = ((hi - lo) / width).ceil().clamp(1.0, n as f64) as usize;
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in s {
        let k = (((x - lo) / w) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (k, &c)| if c > acc.1 { (k, c) } else { acc })
        .0;
    lo + (best as f64 + 0.5) * w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub mode: f64,
    pub hdi_mass: f64,
    pub hdi_low: f64,
    pub hdi_high: f64,
    pub p_below_zero: f64,
    /// Posterior mass on the majority sign.
    pub p_direction: f64,
    pub rope_low: f64,
    pub rope_high: f64,
    pub rope_fraction: f64,
}

impl PosteriorSummary {
    pub fn hdi_excludes_zero(&self) -> bool {
        self.hdi_low > 0.0 || self.hdi_high < 0.0
    }

    /// The whole HDI lies outside the ROPE.
    pub fn hdi_outside_rope(&self) -> bool {
        self.hdi_low > self.rope_high || self.hdi_high < self.rope_low
    }
}

pub fn summarize(samples: &[f64], mass: f64, rope: (f64, f64)) -> Result<PosteriorSummary, SummaryError> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(SummaryError::BadMass(mass));
    }
    if !(rope.0 <= rope.1) {
        return Err(SummaryError::BadRope(rope.0, rope.1));
    }
    let s = sorted_checked(samples)?;
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let sd = (s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let (hdi_low, hdi_high) = hdi_sorted(&s, mass);
    let below = s.iter().filter(|&&x| x < 0.0).count() as f64 / n;
    let above = s.iter().filter(|&&x| x > 0.0).count() as f64 / n;
    let in_rope = s.iter().filter(|&&x| x >= rope.0 && x <= rope.1).count() as f64 / n;
    Ok(PosteriorSummary {
        n: s.len(),
        mean,
        sd,
        mode: mode_sorted(&s),
        hdi_mass: mass,
        hdi_low,
        hdi_high,
        p_below_zero: below,
        p_direction: below.max(above),
        rope_low: rope.0,
        rope_high: rope.1,
        rope_fraction: in_rope,
    })
}

/// Draws of one derived quantity, optionally with the matching
/// model-implied observation standard deviation per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityDraws {
    pub name: String,
    pub values: Vec<f64>,
    pub sd: Option<Vec<f64>>,
}

impl QuantityDraws {
    /// The part of the name before `[`, e.g. `mean` for `mean[long_text]`.
    pub fn quantity(&self) -> &str {
        quantity_of(&self.name)
    }

    /// Pulls `name` and, when present, the `sd[...]` column for the same
    /// group out of a table of derived draws.
    pub fn from_derived(table: &Draws, name: &str) -> Option<Self> {
        let values = table.pooled_by_name(name)?;
        let sd = group_of(name).and_then(|g| table.pooled_by_name(&format!("sd[{g}]")));
        Some(QuantityDraws {
            name: name.to_string(),
            values,
            sd,
        })
    }
}

pub fn quantity_of(name: &str) -> &str {
    name.split('[').next().unwrap_or(name)
}

pub fn group_of(name: &str) -> Option<&str> {
    let start = name.find('[')?;
    name[start + 1..].strip_suffix(']')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastOptions {
    pub mass: f64,
    pub rope: (f64, f64),
    /// Seed for resampling when draw counts differ.
    pub seed: u64,
}

impl Default for ContrastOptions {
    fn default() -> Self {
        ContrastOptions {
            mass: DEFAULT_HDI_MASS,
            rope: DEFAULT_ROPE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub a: String,
    pub b: String,
    /// Per-draw `a − b`.
    pub diff: Vec<f64>,
    pub summary: PosteriorSummary,
    /// Per-draw difference over the pooled observation standard deviation,
    /// when both sides carry one.
    pub effect_size: Option<Vec<f64>>,
    pub effect_summary: Option<PosteriorSummary>,
}

/// Per-draw difference `a − b`. Draws are paired by index; if the counts
/// differ, the shorter side is resampled with replacement to the longer
/// length.
pub fn contrast(a: &QuantityDraws, b: &QuantityDraws, opts: &ContrastOptions) -> Result<Contrast, SummaryError> {
    if a.quantity() != b.quantity() {
        return Err(SummaryError::MismatchedQuantities {
            a: a.name.clone(),
            b: b.name.clone(),
        });
    }
    let n = a.values.len().max(b.values.len());
    let min = a.values.len().min(b.values.len());
    if min < MIN_SAMPLES {
        return Err(SummaryError::TooFewSamples { got: min, min: MIN_SAMPLES });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let index_a = align(a.values.len(), n, &mut rng);
    let index_b = align(b.values.len(), n, &mut rng);
    let diff: Vec<f64> = index_a
        .iter()
        .zip(&index_b)
        .map(|(&i, &j)| a.values[i] - b.values[j])
        .collect();
    let summary = summarize(&diff, opts.mass, opts.rope)?;
    let effect_size = match (&a.sd, &b.sd) {
        (Some(sa), Some(sb)) if sa.len() == a.values.len() && sb.len() == b.values.len() => Some(
            index_a
                .iter()
                .zip(&index_b)
                .zip(&diff)
                .map(|((&i, &j), d)| d / ((sa[i] * sa[i] + sb[j] * sb[j]) / 2.0).sqrt())
                .collect::<Vec<f64>>(),
        ),
        _ => None,
    };
    let effect_summary = match &effect_size {
        Some(e) => Some(summarize(e, opts.mass, opts.rope)?),
        None => None,
    };
    Ok(Contrast {
        a: a.name.clone(),
        b: b.name.clone(),
        diff,
        summary,
        effect_size,
        effect_summary,
    })
}

fn align(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len == n {
        (0..n).collect()
    } else {
        (0..n).map(|_| rng.random_range(0..len)).collect()
    }
}

/// One row of the per-parameter summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub mode: f64,
    pub hdi_low: f64,
    pub hdi_high: f64,
    /// `None` when fewer than two chains or too few draws.
    pub rhat: Option<f64>,
}

pub fn summarize_draws(draws: &Draws, mass: f64) -> Result<Vec<ParamSummary>, SummaryError> {
    (0..draws.dim())
        .map(|j| {
            let per_chain = draws.per_chain(j);
            let pooled = per_chain.concat();
            let s = summarize(&pooled, mass, DEFAULT_ROPE)?;
            Ok(ParamSummary {
                name: draws.names[j].clone(),
                mean: s.mean,
                sd: s.sd,
                mode: s.mode,
                hdi_low: s.hdi_low,
                hdi_high: s.hdi_high,
                rhat: split_rhat(&per_chain).ok().map(|r| r.value),
            })
        })
        .collect()
}

/// Largest split-R̂ over all parameters.
pub fn max_rhat(draws: &Draws) -> Option<f64> {
    (0..draws.dim())
        .filter_map(|j| split_rhat(&draws.per_chain(j)).ok().map(|r| r.value))
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
}
