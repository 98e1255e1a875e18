//! File-driven experiments behind the `soft-tmvn` command.
//!
//! Every command reads one JSON config (unknown keys rejected), runs its
//! replicates in parallel and writes reports into an output directory with
//! temp-file-and-rename. `report.json` and any CSV output depend only on
//! config and seed; wall-clock measurements go to `timings.json`.
//!
//! Seeds: replicate `k` draws its chains from streams
//! [`replicate_stream`]`(k, j)` of the run seed and any per-replicate problem
//! instance from [`generator_stream`]`(k)`. A problem shared by all replicates
//! comes from [`GENERATOR_STREAM`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::batch::{ChainSpec, Init, SampleBatch};
use crate::constraints::{ConstraintSet, SoftTmvnParams};
use crate::diagnostics::{metric_d, metric_xi, w1_per_coord};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain_with, run_lmc_with};
use crate::msim::{fit_msim_with, gen_msim_family, mean_squared_error, MsimConfig, DEFAULT_N_TEST, DEFAULT_SIGMA0};
use crate::reference::{gibbs_tmvn_with, rejection_batch_with, HardTmvn};
use crate::rng::{generator_stream, replicate_stream, stream_rng, ChainRng, GENERATOR_STREAM};
use crate::scenarios::{generate_with, Scenario, ScenarioSpec, DEFAULT_NU};
use crate::structured::{sample_posterior, CovStructure};

pub const DEFAULT_ETA: f64 = 100.0;

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
}

/// Parse a config document, reporting the JSON path of the first schema violation.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_config(&fs::read_to_string(path)?)
}

/// Write `bytes` to `dir/name` through a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
    Ok(target)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

/// Chain length settings; the seed comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub init: Init,
}

fn default_burn_in() -> usize {
    ChainSpec::default().burn_in
}
fn default_thin() -> usize {
    ChainSpec::default().thin
}
fn default_n_samples() -> usize {
    ChainSpec::default().n_samples
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            burn_in: default_burn_in(),
            thin: default_thin(),
            n_samples: default_n_samples(),
            init: Init::default(),
        }
    }
}

impl ChainSettings {
    pub fn spec(&self, seed: u64) -> ChainSpec {
        ChainSpec::new(self.burn_in, self.thin, self.n_samples, seed).with_init(self.init.clone())
    }
}

/// Covariance as written in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    /// Row-major rows.
    Dense(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
    Identity(usize),
    ProbitBlock {
        h: Vec<Vec<f64>>,
        l: Vec<f64>,
    },
    KernelGram {
        points: Vec<f64>,
        #[serde(default = "default_nu")]
        nu: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

fn default_nu() -> f64 {
    DEFAULT_NU
}
fn default_scale() -> f64 {
    1.0
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::dim(what, ncols, bad.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl SigmaSpec {
    pub fn build(&self) -> Result<CovStructure> {
        match self {
            SigmaSpec::Dense(rows) => CovStructure::dense(rows_to_matrix(rows, "sigma row length")?),
            SigmaSpec::Diagonal(d) => CovStructure::diagonal(DVector::from_column_slice(d)),
            SigmaSpec::Identity(d) => Ok(CovStructure::identity(*d)),
            SigmaSpec::ProbitBlock { h, l } => {
                CovStructure::probit_block(rows_to_matrix(h, "h row length")?, DVector::from_column_slice(l))
            }
            SigmaSpec::KernelGram { points, nu, scale } => CovStructure::kernel_gram(points.clone(), *nu, *scale),
        }
    }
}

/// Mean, covariance and constraints given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitProblem {
    /// Zero when omitted.
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    pub sigma: SigmaSpec,
    pub constraints: ConstraintSet,
}

/// Target of a run: explicit parameters or a generated scenario. Scenario
/// instances are drawn from the run seed, so a `seed` inside the scenario
/// must be left at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Explicit(ExplicitProblem),
    Scenario(ScenarioSpec),
}

/// A resolved problem: zero-or-given mean, covariance, constraints, and
/// generator details when it came from a scenario.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mu: DVector<f64>,
    pub sigma: CovStructure,
    pub constraints: ConstraintSet,
    pub details: Option<Value>,
}

impl Problem {
    pub fn soft(&self, eta: f64) -> Result<SoftTmvnParams> {
        SoftTmvnParams::new(self.mu.clone(), self.sigma.clone(), self.constraints.clone(), eta)
    }

    pub fn hard(&self) -> Result<HardTmvn> {
        HardTmvn::new(self.mu.clone(), self.sigma.clone(), self.constraints.clone())
    }
}

impl ProblemSpec {
    fn check(&self) -> Result<()> {
        match self {
            ProblemSpec::Scenario(s) if s.seed() != 0 => Err(Error::Config {
                path: "problem.scenario.seed".into(),
                message: "scenario instances are drawn from the run seed; remove this key".into(),
            }),
            _ => Ok(()),
        }
    }

    /// Build the problem, drawing a scenario instance from `rng` if needed.
    pub fn resolve(&self, rng: &mut ChainRng) -> Result<Problem> {
        match self {
            ProblemSpec::Explicit(e) => {
                let sigma = e.sigma.build()?;
                let mu = match &e.mu {
                    Some(m) => DVector::from_column_slice(m),
                    None => DVector::zeros(sigma.dim()),
                };
                Ok(Problem {
                    mu,
                    sigma,
                    constraints: e.constraints.clone(),
                    details: None,
                })
            }
            ProblemSpec::Scenario(spec) => {
                let Scenario {
                    sigma,
                    constraints,
                    details,
                } = generate_with(spec, rng)?;
                Ok(Problem {
                    mu: DVector::zeros(sigma.dim()),
                    sigma,
                    constraints,
                    details: Some(serde_json::to_value(&details)?),
                })
            }
        }
    }
}

fn check_replicates(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config {
            path: "replicates".into(),
            message: "at least one replicate is required".into(),
        });
    }
    Ok(())
}

fn default_replicates() -> usize {
    1
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn mean_sd(values: &[f64]) -> Value {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    json!({ "mean": mean, "sd": sd })
}

/// Run `f` for every replicate in parallel, keeping replicate order.
fn run_replicates<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| f(k).map_err(|e| replicate_error(k, e)))
        .collect()
}

fn replicate_error(k: u64, e: Error) -> Error {
    match e {
        Error::Config { .. } | Error::Io(_) | Error::Json(_) => e,
        other => Error::Replicate {
            index: k,
            error: Box::new(other),
        },
    }
}

// ---------------------------------------------------------------- sample

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Soft,
    HardGibbs,
    HardRejection,
    Lmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub target: TargetKind,
    pub problem: ProblemSpec,
    /// Sharpness for `soft` and `lmc`.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// For `hard-rejection` only `n_samples` is used.
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default = "default_lmc_step")]
    pub lmc_step: f64,
    #[serde(default = "default_max_tries")]
    pub max_tries: u64,
    #[serde(default)]
    pub seed: u64,
    /// Independent chains on the same problem.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

fn default_lmc_step() -> f64 {
    1e-3
}
fn default_max_tries() -> u64 {
    1_000_000
}

fn apply(seed: &mut u64, replicates: &mut usize, o: &Overrides) {
    if let Some(s) = o.seed {
        *seed = s;
    }
    if let Some(r) = o.replicates {
        *replicates = r;
    }
}

/// Draws of one replicate plus the rejection proposal count where relevant.
fn sample_once(config: &SampleConfig, problem: &Problem, k: u64) -> Result<(SampleBatch, Option<u64>)> {
    let mut rng = stream_rng(config.seed, replicate_stream(k, 0));
    let spec = config.chain.spec(config.seed);
    match config.target {
        TargetKind::Soft => Ok((run_chain_with(&problem.soft(config.eta)?, &spec, &mut rng)?, None)),
        TargetKind::Lmc => Ok((run_lmc_with(&problem.soft(config.eta)?, config.lmc_step, &spec, &mut rng)?, None)),
        TargetKind::HardGibbs => Ok((gibbs_tmvn_with(&problem.hard()?, &spec, &mut rng)?, None)),
        TargetKind::HardRejection => {
            let (batch, tries) = rejection_batch_with(&problem.hard()?, spec.n_samples, &mut rng, config.max_tries)?;
            Ok((batch, Some(tries)))
        }
    }
}

/// CSV file name of replicate `k` out of `n`.
pub fn draws_file_name(k: usize, n: usize) -> String {
    if n == 1 {
        "draws.csv".into()
    } else {
        format!("draws_{k}.csv")
    }
}

/// Returns the written `report.json` value.
pub fn cmd_sample(config_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<Value> {
    let mut config: SampleConfig = load_config(config_path)?;
    apply(&mut config.seed, &mut config.replicates, overrides);
    run_sample(&config, out_dir)
}

pub fn run_sample(config: &SampleConfig, out_dir: &Path) -> Result<Value> {
    check_replicates(config.replicates)?;
    config.problem.check()?;
    let problem = config.problem.resolve(&mut stream_rng(config.seed, GENERATOR_STREAM))?;
    let results = run_replicates(config.replicates, |k| {
        let start = Instant::now();
        let (batch, tries) = sample_once(config, &problem, k)?;
        Ok((batch, tries, start.elapsed().as_secs_f64()))
    })?;
    let mut reps = Vec::new();
    let mut timings = Vec::new();
    for (k, (batch, tries, secs)) in results.iter().enumerate() {
        let file = draws_file_name(k, config.replicates);
        write_atomic(out_dir, &file, batch.to_csv_string().as_bytes())?;
        let mut rep = json!({
            "replicate": k,
            "draws_file": file,
            "summary": batch.summary(),
        });
        if let Some(t) = tries {
            rep["proposals"] = json!(t);
        }
        reps.push(rep);
        timings.push(json!({ "replicate": k, "wall_seconds": secs }));
    }
    let mut report = json!({
        "command": "sample",
        "seed": config.seed,
        "config": config,
        "replicates": reps,
    });
    if let Some(d) = &problem.details {
        report["problem_details"] = d.clone();
    }
    write_json(out_dir, "report.json", &report)?;
    write_json(out_dir, "timings.json", &json!({ "command": "sample", "replicates": timings }))?;
    Ok(report)
}

// ---------------------------------------------------------------- compare

/// Sampler the soft chain is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Coordinatewise Gibbs on the hard target.
    Gibbs { chain: ChainSettings },
    /// Accept/reject on the hard target.
    Rejection {
        n_samples: usize,
        #[serde(default = "default_max_tries")]
        max_tries: u64,
    },
    /// An independent soft chain; a baseline for estimator noise.
    Soft { chain: ChainSettings },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub problem: ProblemSpec,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub soft: ChainSettings,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub seed: u64,
    /// Scenario problems are redrawn for every replicate.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

/// Metrics of one soft-versus-reference comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    #[serde(rename = "D")]
    pub d: f64,
    pub xi: f64,
    pub w1_per_coord: Vec<f64>,
    /// Fraction of soft draws satisfying every hard constraint.
    pub soft_constraint_mass: f64,
}

pub fn compare_batches(soft: &SampleBatch, reference: &SampleBatch, constraints: &ConstraintSet) -> Result<Comparison> {
    let inside = (0..soft.n_samples())
        .map(|i| constraints.hard_indicator(&soft.row(i)))
        .collect::<Result<Vec<bool>>>()?;
    Ok(Comparison {
        d: metric_d(soft.draws(), reference.draws())?,
        xi: metric_xi(soft.draws(), reference.draws())?,
        w1_per_coord: w1_per_coord(soft.draws(), reference.draws())?,
        soft_constraint_mass: inside.iter().filter(|&&b| b).count() as f64 / inside.len() as f64,
    })
}

pub fn cmd_compare(config_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<Value> {
    let mut config: CompareConfig = load_config(config_path)?;
    apply(&mut config.seed, &mut config.replicates, overrides);
    run_compare(&config, out_dir)
}

pub fn run_compare(config: &CompareConfig, out_dir: &Path) -> Result<Value> {
    check_replicates(config.replicates)?;
    config.problem.check()?;
    let seed = config.seed;
    let results = run_replicates(config.replicates, |k| {
        let start = Instant::now();
        let problem = config.problem.resolve(&mut stream_rng(seed, generator_stream(k)))?;
        let soft_params = problem.soft(config.eta)?;
        let soft = run_chain_with(&soft_params, &config.soft.spec(seed), &mut stream_rng(seed, replicate_stream(k, 0)))?;
        let mut ref_rng = stream_rng(seed, replicate_stream(k, 1));
        let reference = match &config.reference {
            ReferenceSpec::Gibbs { chain } => gibbs_tmvn_with(&problem.hard()?, &chain.spec(seed), &mut ref_rng)?,
            ReferenceSpec::Rejection { n_samples, max_tries } => {
                rejection_batch_with(&problem.hard()?, *n_samples, &mut ref_rng, *max_tries)?.0
            }
            ReferenceSpec::Soft { chain } => run_chain_with(&soft_params, &chain.spec(seed), &mut ref_rng)?,
        };
        let cmp = compare_batches(&soft, &reference, &problem.constraints)?;
        let mut rep = json!({
            "replicate": k,
            "comparison": cmp,
            "soft": soft.summary(),
            "reference": reference.summary(),
        });
        if let Some(d) = problem.details {
            rep["problem_details"] = d;
        }
        Ok((rep, cmp, start.elapsed().as_secs_f64()))
    })?;
    let ds: Vec<f64> = results.iter().map(|r| r.1.d).collect();
    let xis: Vec<f64> = results.iter().map(|r| r.1.xi).collect();
    let masses: Vec<f64> = results.iter().map(|r| r.1.soft_constraint_mass).collect();
    let report = json!({
        "command": "compare",
        "seed": seed,
        "config": config,
        "replicates": results.iter().map(|r| r.0.clone()).collect::<Vec<_>>(),
        "summary": {
            "D": mean_sd(&ds),
            "xi": mean_sd(&xis),
            "soft_constraint_mass": mean_sd(&masses),
        },
    });
    let timings: Vec<Value> = results
        .iter()
        .enumerate()
        .map(|(k, r)| json!({ "replicate": k, "wall_seconds": r.2 }))
        .collect();
    write_json(out_dir, "report.json", &report)?;
    write_json(out_dir, "timings.json", &json!({ "command": "compare", "replicates": timings }))?;
    Ok(report)
}

// ---------------------------------------------------------------- msim

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsimRunConfig {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    pub model: MsimConfig,
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default)]
    pub seed: u64,
    /// Seed for the simulated data; the run seed when omitted. Sharing it
    /// between runs with different priors fits both to the same data.
    #[serde(default)]
    pub data_seed: Option<u64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

fn default_n_test() -> usize {
    DEFAULT_N_TEST
}
fn default_sigma0() -> f64 {
    DEFAULT_SIGMA0
}

pub fn cmd_msim(config_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<Value> {
    let mut config: MsimRunConfig = load_config(config_path)?;
    apply(&mut config.seed, &mut config.replicates, overrides);
    run_msim(&config, out_dir)
}

pub fn run_msim(config: &MsimRunConfig, out_dir: &Path) -> Result<Value> {
    check_replicates(config.replicates)?;
    config.model.validate()?;
    let data_seed = config.data_seed.unwrap_or(config.seed);
    let family = gen_msim_family(
        config.n,
        config.n_test,
        config.p,
        config.model.m,
        config.sigma0,
        data_seed,
        config.replicates,
    )?;
    let results = run_replicates(config.replicates, |k| {
        let spec = config.chain.spec(config.seed);
        let mut rng = stream_rng(config.seed, replicate_stream(k, 0));
        let fit = fit_msim_with(&family.train[k as usize], &config.model, &spec, &mut rng)?;
        let pred = fit.predict(&family.test_x, family.c)?;
        let alpha_mean: Vec<f64> = fit.alpha_draws.row_mean().iter().copied().collect();
        let rep = json!({
            "replicate": k,
            "mse": mean_squared_error(&pred, &family.test_f)?,
            "mse_noisy": mean_squared_error(&pred, &family.test_y)?,
            "alpha_ess": fit.alpha_ess(),
            "psi_ess": fit.psi_ess(),
            "beta_acceptance": fit.beta_acceptance,
            "proposal_sd": fit.proposal_sd,
            "monotonicity_violation_rate": fit.monotonicity_violation_rate(),
            "alpha_mean": alpha_mean,
            "sigma2_mean": fit.sigma2_draws.iter().sum::<f64>() / fit.sigma2_draws.len() as f64,
        });
        Ok((rep, fit.wall_seconds))
    })?;
    let field = |name: &str| -> Vec<f64> { results.iter().filter_map(|r| r.0[name].as_f64()).collect() };
    let walls: Vec<f64> = results.iter().map(|r| r.1).collect();
    let report = json!({
        "command": "msim",
        "seed": config.seed,
        "data_seed": data_seed,
        "config": config,
        "truth": family.truth,
        "replicates": results.iter().map(|r| r.0.clone()).collect::<Vec<_>>(),
        "summary": {
            "mse": mean_sd(&field("mse")),
            "alpha_ess": mean_sd(&field("alpha_ess")),
            "psi_ess": mean_sd(&field("psi_ess")),
            "beta_acceptance": mean_sd(&field("beta_acceptance")),
            "monotonicity_violation_rate": mean_sd(&field("monotonicity_violation_rate")),
        },
    });
    let timings = json!({
        "command": "msim",
        "replicates": walls.iter().enumerate().map(|(k, w)| json!({ "replicate": k, "wall_seconds": w })).collect::<Vec<_>>(),
        "summary": { "wall_seconds": mean_sd(&walls) },
    });
    write_json(out_dir, "report.json", &report)?;
    write_json(out_dir, "timings.json", &timings)?;
    Ok(report)
}

// ---------------------------------------------------------------- bench

/// Timing grid for the structured posterior sampler with diagonal `Sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_r_fixed")]
    pub r_fixed: usize,
    #[serde(default = "default_d_grid")]
    pub d_grid: Vec<usize>,
    #[serde(default = "default_d_fixed")]
    pub d_fixed: usize,
    #[serde(default = "default_r_grid")]
    pub r_grid: Vec<usize>,
    /// Timed draws per grid point; the median is reported.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_r_fixed() -> usize {
    50
}
fn default_d_grid() -> Vec<usize> {
    vec![500, 1000, 2000, 4000]
}
fn default_d_fixed() -> usize {
    2000
}
fn default_r_grid() -> Vec<usize> {
    vec![25, 50, 100, 200]
}
fn default_repeats() -> usize {
    15
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            r_fixed: default_r_fixed(),
            d_grid: default_d_grid(),
            d_fixed: default_d_fixed(),
            r_grid: default_r_grid(),
            repeats: default_repeats(),
            seed: 0,
        }
    }
}

/// One timed grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    /// `"d"` for the sweep over `d` at fixed `r`, `"r"` for the other.
    pub sweep: &'static str,
    pub r: usize,
    pub d: usize,
    pub micros_per_step: f64,
}

/// Timing table with least-squares slopes of log time on log size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub slope_d: Option<f64>,
    pub slope_r: Option<f64>,
}

/// Least-squares slope of `log y` on `log x`; `None` with fewer than two distinct `x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

struct BenchPoint {
    phi: DMatrix<f64>,
    alpha: DVector<f64>,
    cov: CovStructure,
    rng: ChainRng,
}

impl BenchPoint {
    fn new(r: usize, d: usize, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, stream);
        let phi = DMatrix::from_fn(r, d, |_, _| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt());
        let alpha = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = CovStructure::diagonal(DVector::from_fn(d, |_, _| rng.random_range(0.5..1.5)))?;
        Ok(Self { phi, alpha, cov, rng })
    }

    fn step(&mut self) -> Result<DVector<f64>> {
        sample_posterior(&self.phi, &self.alpha, &self.cov, &mut self.rng)
    }

    /// Median microseconds per draw.
    fn time(&mut self, repeats: usize) -> Result<f64> {
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let draw = self.step()?;
            times.push(start.elapsed().as_secs_f64() * 1e6);
            std::hint::black_box(draw);
        }
        times.sort_by(f64::total_cmp);
        Ok(times[times.len() / 2])
    }
}

/// Grid points are timed one after another on the calling thread. Every
/// point gets one untimed draw before any timing starts, so the allocator has
/// seen the largest buffers and later points do not pay first-touch page
/// faults that earlier ones did.
pub fn run_bench_grid(config: &BenchConfig) -> Result<BenchResult> {
    if config.repeats == 0 {
        return Err(Error::Config {
            path: "repeats".into(),
            message: "at least one repeat is required".into(),
        });
    }
    let mut rows = Vec::new();
    let points = config
        .d_grid
        .iter()
        .map(|&d| ("d", config.r_fixed, d))
        .chain(config.r_grid.iter().map(|&r| ("r", r, config.d_fixed)));
    let mut prepared = Vec::new();
    for (i, (sweep, r, d)) in points.enumerate() {
        let mut point = BenchPoint::new(r, d, config.seed, replicate_stream(i as u64, 0))?;
        point.step()?;
        prepared.push((sweep, r, d, point));
    }
    for (sweep, r, d, mut point) in prepared {
        let micros = point.time(config.repeats)?;
        rows.push(BenchRow {
            sweep,
            r,
            d,
            micros_per_step: micros,
        });
    }
    let slope = |sweep: &str, size: fn(&BenchRow) -> usize| {
        let pts: Vec<&BenchRow> = rows.iter().filter(|row| row.sweep == sweep).collect();
        let x: Vec<f64> = pts.iter().map(|row| size(row) as f64).collect();
        let y: Vec<f64> = pts.iter().map(|row| row.micros_per_step).collect();
        log_log_slope(&x, &y)
    };
    let slope_d = slope("d", |row| row.d);
    let slope_r = slope("r", |row| row.r);
    Ok(BenchResult { rows, slope_d, slope_r })
}

pub fn cmd_bench(config_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<BenchResult> {
    let mut config: BenchConfig = load_config(config_path)?;
    if let Some(s) = overrides.seed {
        config.seed = s;
    }
    run_bench(&config, out_dir)
}

/// `report.json` lists the grid; the measured table and slopes go to `timings.json`.
pub fn run_bench(config: &BenchConfig, out_dir: &Path) -> Result<BenchResult> {
    let result = run_bench_grid(config)?;
    let grid: Vec<Value> = result
        .rows
        .iter()
        .map(|row| json!({ "sweep": row.sweep, "r": row.r, "d": row.d }))
        .collect();
    let report = json!({
        "command": "bench",
        "seed": config.seed,
        "config": config,
        "grid": grid,
    });
    write_json(out_dir, "report.json", &report)?;
    let mut timings = serde_json::to_value(&result)?;
    timings["command"] = json!("bench");
    write_json(out_dir, "timings.json", &timings)?;
    Ok(result)
}
