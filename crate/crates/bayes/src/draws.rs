//! Posterior draws and their columnar text form.
//!
//! The CSV layout is `chain,iter,<param>...` with one row per kept
//! iteration.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    /// Iteration-major: row `i` is `values[i * dim..(i + 1) * dim]`.
    pub values: Vec<f64>,
    /// Per-parameter acceptance rate over kept iterations.
    pub acceptance: Vec<f64>,
    /// Proposal scales after burn-in, in unconstrained units.
    pub step_scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draws {
    pub names: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

#[derive(Debug, Error)]
pub enum DrawsError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("draws file has no `chain,iter` prefix")]
    MissingIndexColumns,
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("chains have unequal lengths")]
    RaggedChains,
}

impl Draws {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Kept iterations per chain.
    pub fn n_iter(&self) -> usize {
        match (self.chains.first(), self.dim()) {
            (Some(c), d) if d > 0 => c.values.len() / d,
            _ => 0,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn chain_column(&self, chain: usize, param: usize) -> Vec<f64> {
        let d = self.dim();
        self.chains[chain].values.iter().skip(param).step_by(d).copied().collect()
    }

    /// One vector per chain for `param`.
    pub fn per_chain(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains()).map(|c| self.chain_column(c, param)).collect()
    }

    /// All chains concatenated for `param`.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.per_chain(param).concat()
    }

    pub fn pooled_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|j| self.pooled(j))
    }

    pub fn mean_acceptance(&self) -> f64 {
        let all: Vec<f64> = self.chains.iter().flat_map(|c| c.acceptance.iter().copied()).collect();
        if all.is_empty() {
            0.0
        } else {
            all.iter().sum::<f64>() / all.len() as f64
        }
    }

    /// Applies the model's derived quantities to every draw. The result has
    /// the same chain/iteration shape; acceptance and scales are empty.
    pub fn derive<M: Model + ?Sized>(&self, model: &M) -> Draws {
        let d = self.dim();
        let mut names = Vec::new();
        let chains = self
            .chains
            .iter()
            .map(|c| {
                let mut values = Vec::new();
                for row in c.values.chunks_exact(d) {
                    let q = model.derived(row);
                    if names.is_empty() {
                        names = q.iter().map(|x| x.name.clone()).collect();
                    }
                    values.extend(q.iter().map(|x| x.value));
                }
                ChainDraws {
                    values,
                    acceptance: Vec::new(),
                    step_scales: Vec::new(),
                }
            })
            .collect();
        Draws { names, chains }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DrawsError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.names.iter().cloned());
        out.write_record(&header)?;
        let d = self.dim();
        let mut record = Vec::with_capacity(d + 2);
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, row) in chain.values.chunks_exact(d.max(1)).enumerate() {
                record.clear();
                record.push(c.to_string());
                record.push(i.to_string());
                // `{:?}` prints the shortest representation that round-trips.
                record.extend(row.iter().map(|v| format!("{v:?}")));
                out.write_record(&record)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DrawsError> {
        let mut input = csv::Reader::from_reader(r);
        let header = input.headers()?.clone();
        if header.len() < 2 || &header[0] != "chain" || &header[1] != "iter" {
            return Err(DrawsError::MissingIndexColumns);
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut chains: Vec<ChainDraws> = Vec::new();
        for (row, rec) in input.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| DrawsError::BadRow { row: row + 1, message };
            let chain: usize = rec[0].parse().map_err(|e| bad(format!("chain: {e}")))?;
            if chain > chains.len() {
                return Err(bad(format!("chain {chain} out of order")));
            }
            if chain == chains.len() {
                chains.push(ChainDraws {
                    values: Vec::new(),
                    acceptance: Vec::new(),
                    step_scales: Vec::new(),
                });
            }
            for field in rec.iter().skip(2) {
                let v: f64 = field.parse().map_err(|e| bad(format!("value `{field}`: {e}")))?;
                chains[chain].values.push(v);
            }
        }
        if chains.windows(2).any(|w| w[0].values.len() != w[1].values.len()) {
            return Err(DrawsError::RaggedChains);
        }
        Ok(Draws { names, chains })
    }
}
