//! Convergence diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagError {
    #[error("need at least 2 chains, got {0}")]
    TooFewChains(usize),
    #[error("need an even number of at least 4 draws per chain, got {0}")]
    BadLength(usize),
    #[error("chains have unequal lengths")]
    Ragged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    pub value: f64,
    /// Every half-chain had zero variance and they all agreed; `value` is
    /// then reported as 1.
    pub degenerate: bool,
}

/// Split-chain potential scale reduction: each chain is cut in half and the
/// halves are compared as separate chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Rhat, DiagError> {
    if chains.len() < 2 {
        return Err(DiagError::TooFewChains(chains.len()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagError::Ragged);
    }
    if n < 4 || n % 2 != 0 {
        return Err(DiagError::BadLength(n));
    }
    let half = n / 2;
    let pieces: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[half..]]).collect();
    let means: Vec<f64> = pieces.iter().map(|p| p.iter().sum::<f64>() / half as f64).collect();
    let within: f64 = pieces
        .iter()
        .zip(&means)
        .map(|(p, m)| p.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (half - 1) as f64)
        .sum::<f64>()
        / pieces.len() as f64;
    let m = means.len() as f64;
    let grand = means.iter().sum::<f64>() / m;
    let between = half as f64 * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1.0);
    if within == 0.0 {
        return Ok(if between == 0.0 {
            Rhat {
                value: 1.0,
                degenerate: true,
            }
        } else {
            Rhat {
                value: f64::INFINITY,
                degenerate: false,
            }
        });
    }
    let var_plus = (half as f64 - 1.0) / half as f64 * within + between / half as f64;
    Ok(Rhat {
        value: (var_plus / within).sqrt(),
        degenerate: false,
    })
}
