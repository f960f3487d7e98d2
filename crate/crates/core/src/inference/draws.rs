use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::diagnostics::split_rhat_of;
use crate::error::{Error, Result};

const RHAT_WARNING: f64 = 1.1;

/// Kept posterior draws: one column per reported parameter, chains stored
/// one after another inside each column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    chains: usize,
    per_chain: usize,
    acceptance: Vec<f64>,
    rhat: Vec<f64>,
    warnings: Vec<String>,
}

impl PosteriorDraws {
    pub(crate) fn new(
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        chains: usize,
        per_chain: usize,
        acceptance: Vec<f64>,
    ) -> Self {
        let mut draws = PosteriorDraws {
            names,
            columns,
            chains,
            per_chain,
            acceptance,
            rhat: Vec::new(),
            warnings: Vec::new(),
        };
        draws.refresh_rhat();
        draws
    }

    /// Draws assembled directly from columns, e.g. synthetic fixtures or an
    /// imported CSV. All columns must share one length.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>, chains: usize) -> Result<Self> {
        if names.len() != columns.len() || columns.is_empty() {
            return Err(Error::Precondition("one name per column required".into()));
        }
        let len = columns[0].len();
        if len == 0 || columns.iter().any(|c| c.len() != len) {
            return Err(Error::Precondition("columns must be nonempty and of equal length".into()));
        }
        if chains == 0 || !len.is_multiple_of(chains) {
            return Err(Error::Precondition(format!(
                "{len} draws cannot be split into {chains} chains"
            )));
        }
        Ok(PosteriorDraws::new(names, columns, chains, len / chains, Vec::new()))
    }

    fn refresh_rhat(&mut self) {
        self.rhat.clear();
        self.warnings.clear();
        if self.chains < 2 {
            return;
        }
        for (name, col) in self.names.iter().zip(&self.columns) {
            let chains: Vec<&[f64]> = col.chunks(self.per_chain).collect();
            let r = split_rhat_of(&chains);
            if r > RHAT_WARNING {
                self.warnings
                    .push(format!("{name}: split R-hat {r:.3} exceeds {RHAT_WARNING}"));
            }
            self.rhat.push(r);
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn per_chain(&self) -> usize {
        self.per_chain
    }

    /// Per sampled coordinate, averaged over chains. Empty for imported draws.
    pub fn acceptance(&self) -> &[f64] {
        &self.acceptance
    }

    pub fn rhat(&self) -> &[f64] {
        &self.rhat
    }

    /// Convergence warnings; non-fatal.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.columns[i].as_slice())
    }

    pub(crate) fn expect_column(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::Precondition(format!("draws have no `{name}` column")))
    }

    pub fn mean(&self, name: &str) -> Result<f64> {
        let c = self.expect_column(name)?;
        Ok(c.iter().sum::<f64>() / c.len() as f64)
    }

    pub fn median(&self, name: &str) -> Result<f64> {
        let mut c = self.expect_column(name)?.to_vec();
        c.sort_by(f64::total_cmp);
        let n = c.len();
        Ok(if n % 2 == 1 {
            c[n / 2]
        } else {
            0.5 * (c[n / 2 - 1] + c[n / 2])
        })
    }

    /// One column per parameter, one row per kept draw, preceded by a `chain` column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["chain".to_string()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header)?;
        for row in 0..self.len() {
            let mut rec = vec![(row / self.per_chain).to_string()];
            rec.extend(self.columns.iter().map(|c| c[row].to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`write_csv`](Self::write_csv). A missing
    /// `chain` column is read as a single chain.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let chain_col = headers.iter().position(|h| h == "chain");
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != chain_col)
            .map(|(_, h)| h.clone())
            .collect();
        let mut columns = vec![Vec::new(); names.len()];
        let mut chain_ids = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let mut k = 0;
            for (i, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::config(format!("row {}/{}", chain_ids.len() + 1, headers[i]), "not a number")
                })?;
                if Some(i) == chain_col {
                    chain_ids.push(v as usize);
                } else {
                    columns[k].push(v);
                    k += 1;
                }
            }
        }
        let chains = chain_ids.iter().copied().max().map_or(1, |m| m + 1);
        Self::from_columns(names, columns, chains)
    }
}
