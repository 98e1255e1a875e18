//! Chain configuration and the resulting matrix of draws.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::ess;
use crate::error::{Error, Result};

/// Starting point of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Init {
    Named(InitName),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitName {
    /// `mu`, with orthant-type violations flipped into the constraint set.
    Mean,
    Origin,
}

impl Default for Init {
    fn default() -> Self {
        Init::Named(InitName::Mean)
    }
}

/// Burn-in, thinning and length of a chain. The defaults follow the
/// experiments in the accompanying study: 1000 burn-in, every 100th draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: Init,
}

fn default_burn_in() -> usize {
    1000
}

fn default_thin() -> usize {
    100
}

fn default_n_samples() -> usize {
    1000
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            burn_in: default_burn_in(),
            thin: default_thin(),
            n_samples: default_n_samples(),
            seed: 0,
            init: Init::default(),
        }
    }
}

impl ChainSpec {
    pub fn new(burn_in: usize, thin: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            burn_in,
            thin,
            n_samples,
            seed,
            init: Init::default(),
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
        }
        Ok(())
    }

    /// Total number of transitions.
    pub fn total_iterations(&self) -> usize {
        self.burn_in + self.thin * self.n_samples
    }

    /// Whether the state after transition `iter` (1-based) is retained.
    pub fn keeps(&self, iter: usize) -> bool {
        iter > self.burn_in && (iter - self.burn_in) % self.thin == 0
    }
}

/// Retained draws, one row per draw, plus the transition index each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    draws: DMatrix<f64>,
    iterations: Vec<usize>,
}

/// Per-coordinate summary written to JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_samples: usize,
    pub dim: usize,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// `None` where the coordinate is constant.
    pub ess_per_coord: Vec<Option<f64>>,
}

/// Row-major accumulator used by the chain runners.
#[derive(Debug)]
pub(crate) struct BatchBuilder {
    d: usize,
    buf: Vec<f64>,
    iterations: Vec<usize>,
}

impl BatchBuilder {
    pub(crate) fn new(d: usize, capacity: usize) -> Self {
        Self {
            d,
            buf: Vec::with_capacity(d * capacity),
            iterations: Vec::with_capacity(capacity),
        }
    }

    pub(crate) fn push(&mut self, iter: usize, theta: &DVector<f64>) {
        debug_assert_eq!(theta.len(), self.d);
        self.buf.extend(theta.iter());
        self.iterations.push(iter);
    }

    pub(crate) fn finish(self) -> SampleBatch {
        let n = self.iterations.len();
        SampleBatch {
            draws: DMatrix::from_row_slice(n, self.d, &self.buf),
            iterations: self.iterations,
        }
    }
}

impl SampleBatch {
    pub fn from_rows(draws: DMatrix<f64>, iterations: Vec<usize>) -> Result<Self> {
        if iterations.len() != draws.nrows() {
            return Err(Error::dim("iterations", draws.nrows(), iterations.len()));
        }
        Ok(Self { draws, iterations })
    }

    pub fn n_samples(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    /// `n_samples x d`.
    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }

    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.column(j).iter().copied().collect()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.draws.row(i).transpose()
    }

    pub fn means(&self) -> DVector<f64> {
        self.draws.row_mean().transpose()
    }

    pub fn sds(&self) -> DVector<f64> {
        let n = self.n_samples() as f64;
        let means = self.means();
        DVector::from_iterator(
            self.dim(),
            self.draws.column_iter().zip(means.iter()).map(|(col, m)| {
                let ss: f64 = col.iter().map(|x| (x - m).powi(2)).sum();
                (ss / (n - 1.0).max(1.0)).sqrt()
            }),
        )
    }

    pub fn ess_per_coord(&self) -> Vec<Option<f64>> {
        (0..self.dim()).map(|j| ess(&self.column(j)).ok()).collect()
    }

    pub fn summary(&self) -> BatchSummary {
        BatchSummary {
            n_samples: self.n_samples(),
            dim: self.dim(),
            means: self.means().iter().copied().collect(),
            sds: self.sds().iter().copied().collect(),
            ess_per_coord: self.ess_per_coord(),
        }
    }

    /// CSV with header `theta_0,...`, LF line endings and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|j| format!("theta_{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for row in self.draws.row_iter() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format_float(*v));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
