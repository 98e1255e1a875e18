//! Monotone single-index regression `y = f(x^T alpha) + eps` with `f` a
//! transformed Bernstein polynomial whose coefficients are nondecreasing.
//!
//! The coefficients are reparameterized as increments `psi` (`theta = A psi`),
//! so monotonicity becomes `psi_1..psi_M >= 0`, and `psi` gets either a hard
//! or a soft tMVN prior `N_C(0, 25 I)`. Fitting is Metropolis-within-Gibbs:
//! `psi | rest` (tMVN), `sigma^2 | rest` (inverse gamma), then a random-walk
//! Metropolis step on `beta` with `alpha = beta / |beta|`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::batch::{ChainSpec, Init};
use crate::constraints::{ConstraintSet, Sign, SoftTmvnParams};
use crate::diagnostics::ess;
use crate::error::{check_dim, Error, Result};
use crate::gibbs::{BlockedGibbs, ChainState};
use crate::reference::{gibbs_tmvn_with, HardTmvn};
use crate::rng::{generator_stream, stream_rng, ChainRng, GENERATOR_STREAM};
use crate::structured::CovStructure;

/// `B_{M,j}(u) = C(M, j) u^j (1 - u)^(M - j)` for `j = 0..=M`.
pub fn bernstein_basis(m: usize, u: f64) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!("Bernstein argument must lie in [0, 1], got {u}")));
    }
    let mut out = DVector::zeros(m + 1);
    let mut binom = 1.0;
    for j in 0..=m {
        out[j] = binom * u.powi(j as i32) * (1.0 - u).powi((m - j) as i32);
        binom = binom * (m - j) as f64 / (j + 1) as f64;
    }
    Ok(out)
}

/// Basis on `[-1, 1]`: `B~_{M,j}(t) = B_{M,j}((t + 1) / 2) / 2`, the density of
/// `2U - 1` for `U ~ Beta(j + 1, M - j + 1)` divided by `M + 1`.
pub fn transformed_basis(m: usize, t: f64) -> Result<DVector<f64>> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("index value must lie in [-1, 1], got {t}")));
    }
    Ok(bernstein_basis(m, 0.5 * (t + 1.0))? * 0.5)
}

/// Unit lower-triangular all-ones matrix: `A psi` is the vector of partial sums.
pub fn cumsum_matrix(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m + 1, m + 1, |i, j| if j <= i { 1.0 } else { 0.0 })
}

/// Covariates, responses and the scaling `c >= max_i |x_i|`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsimData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub c: f64,
}

impl MsimData {
    /// `c` defaults to the largest row norm of `x`.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, c: Option<f64>) -> Result<Self> {
        check_dim("y", x.nrows(), y.len())?;
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        let max_norm = max_row_norm(&x);
        let c = c.unwrap_or(max_norm);
        if !(c > 0.0) || c < max_norm {
            return Err(Error::InvalidParameter(format!(
                "scaling {c} is below the largest covariate norm {max_norm}"
            )));
        }
        Ok(Self { x, y, c })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

fn max_row_norm(x: &DMatrix<f64>) -> f64 {
    x.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// `n x (M+1)` matrix whose row `i` is `B~_M(x_i^T alpha / c)`.
pub fn basis_matrix(x: &DMatrix<f64>, c: f64, alpha: &DVector<f64>, m: usize) -> Result<DMatrix<f64>> {
    check_dim("alpha", x.ncols(), alpha.len())?;
    let index = x * alpha / c;
    let mut b = DMatrix::zeros(x.nrows(), m + 1);
    for (i, &t) in index.iter().enumerate() {
        // rounding can push |t| a hair past 1
        let t = if t.abs() <= 1.0 + 1e-12 { t.clamp(-1.0, 1.0) } else { t };
        b.set_row(i, &transformed_basis(m, t)?.transpose());
    }
    Ok(b)
}

/// Simulated data set with a held-out test set.
#[derive(Debug, Clone)]
pub struct MsimDataset {
    pub train: MsimData,
    pub test_x: DMatrix<f64>,
    /// Noiseless regression function at the test points.
    pub test_f: DVector<f64>,
    pub test_y: DVector<f64>,
    pub truth: MsimTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsimTruth {
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma: f64,
}

/// The 21 true coefficients at `M = 20`.
pub const THETA_PATTERN: [f64; 21] = [
    -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0,
];

/// True coefficients for degree `m`: [`THETA_PATTERN`] read at the nearest
/// of its 21 positions, so `m = 20` reproduces it exactly.
pub fn true_theta(m: usize) -> DVector<f64> {
    if m == 0 {
        return DVector::from_element(1, THETA_PATTERN[10]);
    }
    DVector::from_fn(m + 1, |j, _| {
        let pos = (20.0 * j as f64 / m as f64).round() as usize;
        THETA_PATTERN[pos]
    })
}

pub const DEFAULT_N_TEST: usize = 200;
pub const DEFAULT_SIGMA0: f64 = 0.1;

/// Data from the model with `x_i ~ N(0, I_p)`, `alpha_0 = beta_0 / |beta_0|`,
/// `beta_0 ~ N(0, I_p)` and noise sd `0.1`, plus 200 test points.
pub fn gen_msim_data(n: usize, p: usize, m: usize, seed: u64) -> Result<MsimDataset> {
    gen_msim_data_with(n, DEFAULT_N_TEST, p, m, DEFAULT_SIGMA0, seed)
}

/// Replicate 0 of [`gen_msim_family`].
pub fn gen_msim_data_with(n: usize, n_test: usize, p: usize, m: usize, sigma0: f64, seed: u64) -> Result<MsimDataset> {
    let family = gen_msim_family(n, n_test, p, m, sigma0, seed, 1)?;
    Ok(MsimDataset {
        train: family.train.into_iter().next().expect("one replicate"),
        test_x: family.test_x,
        test_f: family.test_f,
        test_y: family.test_y,
        truth: family.truth,
    })
}

/// Independent training sets sharing one truth and one test set.
#[derive(Debug, Clone)]
pub struct MsimFamily {
    pub train: Vec<MsimData>,
    pub test_x: DMatrix<f64>,
    pub test_f: DVector<f64>,
    pub test_y: DVector<f64>,
    pub truth: MsimTruth,
    /// Covariate scaling shared by every set.
    pub c: f64,
}

/// Truth and test set come from the generator stream of `seed`; training set
/// `k` from [`generator_stream`]`(k)`. The covariate scaling `c` is the largest
/// row norm over all generated covariates, so every index lies in `[-1, 1]`
/// and the regression function is the same for every replicate.
pub fn gen_msim_family(
    n: usize,
    n_test: usize,
    p: usize,
    m: usize,
    sigma0: f64,
    seed: u64,
    replicates: usize,
) -> Result<MsimFamily> {
    if n == 0 || p == 0 || n_test == 0 || replicates == 0 {
        return Err(Error::InvalidParameter(format!(
            "need n, n_test, p, replicates >= 1, got ({n}, {n_test}, {p}, {replicates})"
        )));
    }
    if !(sigma0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sd must be nonnegative, got {sigma0}")));
    }
    let normal_vec = |rng: &mut ChainRng, len: usize| DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let beta0 = normal_vec(&mut rng, p);
    let alpha0 = &beta0 / beta0.norm();
    let test_x = DMatrix::from_fn(n_test, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let test_noise = normal_vec(&mut rng, n_test);
    let train: Vec<(DMatrix<f64>, DVector<f64>)> = (0..replicates as u64)
        .map(|k| {
            let mut rng = stream_rng(seed, generator_stream(k));
            let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            (x, normal_vec(&mut rng, n))
        })
        .collect();
    let c = train.iter().map(|(x, _)| max_row_norm(x)).fold(max_row_norm(&test_x), f64::max);
    let theta0 = true_theta(m);
    let test_f = basis_matrix(&test_x, c, &alpha0, m)? * &theta0;
    let test_y = &test_f + test_noise * sigma0;
    let train = train
        .into_iter()
        .map(|(x, noise)| {
            let y = basis_matrix(&x, c, &alpha0, m)? * &theta0 + noise * sigma0;
            MsimData::new(x, y, Some(c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MsimFamily {
        train,
        test_x,
        test_f,
        test_y,
        truth: MsimTruth {
            alpha: alpha0.as_slice().to_vec(),
            theta: theta0.as_slice().to_vec(),
            sigma: sigma0,
        },
        c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PsiPrior {
    Soft {
        #[serde(default = "default_msim_eta")]
        eta: f64,
    },
    Hard,
}

pub const DEFAULT_MSIM_ETA: f64 = 500.0;

fn default_msim_eta() -> f64 {
    DEFAULT_MSIM_ETA
}

/// Sampler settings. Defaults: prior variance 25, `IG(2.1, 1.1)` on `sigma^2`
/// (mean 1, variance 10), `beta` proposal sd starting at 0.01 and tuned during
/// burn-in towards 35% acceptance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsimConfig {
    pub m: usize,
    pub prior: PsiPrior,
    #[serde(default = "default_prior_var")]
    pub prior_var: f64,
    #[serde(default = "default_shape")]
    pub sigma2_shape: f64,
    #[serde(default = "default_rate")]
    pub sigma2_rate: f64,
    #[serde(default = "default_proposal_sd")]
    pub proposal_sd: f64,
    /// Blocked Gibbs steps on `psi | rest` per sweep under the soft prior.
    #[serde(default = "default_soft_inner")]
    pub soft_inner_steps: usize,
    /// Coordinatewise Gibbs sweeps on `psi | rest` per sweep under the hard prior.
    #[serde(default = "default_hard_inner")]
    pub hard_inner_sweeps: usize,
    /// Tune `proposal_sd` during burn-in towards `target_acceptance`; frozen
    /// afterwards. When off, `proposal_sd` is used as given throughout.
    #[serde(default = "default_adapt")]
    pub adapt_proposal: bool,
    #[serde(default = "default_target_acceptance")]
    pub target_acceptance: f64,
}

fn default_prior_var() -> f64 {
    25.0
}
fn default_shape() -> f64 {
    2.1
}
fn default_rate() -> f64 {
    1.1
}
fn default_proposal_sd() -> f64 {
    0.01
}
fn default_soft_inner() -> usize {
    5
}
fn default_hard_inner() -> usize {
    DEFAULT_HARD_INNER_SWEEPS
}
fn default_adapt() -> bool {
    true
}
fn default_target_acceptance() -> f64 {
    0.35
}

/// Coordinatewise sweeps that decorrelate `psi | rest` about as much as five
/// blocked soft-prior steps, from integrated autocorrelation times measured
/// on the desk-scale conditional.
pub const DEFAULT_HARD_INNER_SWEEPS: usize = 20;

/// Sweeps per proposal-scale update during burn-in adaptation.
const ADAPT_BATCH: usize = 25;

impl MsimConfig {
    pub fn new(m: usize, prior: PsiPrior) -> Self {
        Self {
            m,
            prior,
            prior_var: default_prior_var(),
            sigma2_shape: default_shape(),
            sigma2_rate: default_rate(),
            proposal_sd: default_proposal_sd(),
            soft_inner_steps: default_soft_inner(),
            hard_inner_sweeps: default_hard_inner(),
            adapt_proposal: default_adapt(),
            target_acceptance: default_target_acceptance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("prior_var", self.prior_var),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_rate", self.sigma2_rate),
            ("proposal_sd", self.proposal_sd),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if let PsiPrior::Soft { eta } = self.prior {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
            }
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target_acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        if self.soft_inner_steps == 0 || self.hard_inner_sweeps == 0 {
            return Err(Error::InvalidParameter("inner iteration counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Current state of the fitter.
#[derive(Debug, Clone, PartialEq)]
pub struct MsimModel {
    pub m: usize,
    pub psi: DVector<f64>,
    pub beta: DVector<f64>,
    pub alpha: DVector<f64>,
    pub sigma2: f64,
    pub a: DMatrix<f64>,
}

impl MsimModel {
    pub fn new(m: usize, psi: DVector<f64>, beta: DVector<f64>, sigma2: f64) -> Result<Self> {
        check_dim("psi", m + 1, psi.len())?;
        let norm = beta.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("beta must be a nonzero finite vector".into()));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self {
            m,
            psi,
            alpha: &beta / norm,
            beta,
            sigma2,
            a: cumsum_matrix(m),
        })
    }

    /// Starting state: `psi = 0`, `sigma^2 = 1`, `beta` along the least-squares direction.
    pub fn initial(data: &MsimData, m: usize) -> Result<Self> {
        let xtx = data.x.transpose() * &data.x;
        let xty = data.x.transpose() * &data.y;
        let beta = match xtx.cholesky() {
            Some(ch) if xty.norm() > 0.0 => {
                let b = ch.solve(&xty);
                &b / b.norm()
            }
            _ => DVector::from_element(data.p(), 1.0 / (data.p() as f64).sqrt()),
        };
        Self::new(m, DVector::zeros(m + 1), beta, 1.0)
    }

    pub fn theta(&self) -> DVector<f64> {
        &self.a * &self.psi
    }
}

/// Conditional law of `psi` given `alpha` and `sigma^2`.
#[derive(Debug, Clone)]
pub enum PsiConditional {
    Soft(SoftTmvnParams),
    Hard(HardTmvn),
}

/// Monotonicity constraints `psi_1..psi_M >= 0`.
pub fn monotone_constraints(m: usize) -> Result<ConstraintSet> {
    ConstraintSet::axis_aligned(m + 1, (1..=m).map(|k| (k, Sign::Positive)))
}

/// Mean and covariance of the Gaussian part of `psi | alpha, sigma^2`:
/// `Sigma_psi = (D^T D / sigma^2 + I / v)^-1`, `mu_psi = Sigma_psi D^T y / sigma^2`
/// with `D = B_alpha A`.
pub fn psi_gaussian_part(
    basis: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    prior_var: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim("y", basis.nrows(), y.len())?;
    let d = basis * a;
    let k = d.ncols();
    let precision = d.tr_mul(&d) / sigma2 + DMatrix::identity(k, k) / prior_var;
    let chol = precision
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            minor: crate::structured::failing_leading_minor(&precision),
        })?;
    let cov = chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    let mean = chol.solve(&(d.tr_mul(y) / sigma2));
    Ok((mean, cov))
}

pub fn psi_conditional(
    data: &MsimData,
    alpha: &DVector<f64>,
    sigma2: f64,
    config: &MsimConfig,
) -> Result<PsiConditional> {
    let basis = basis_matrix(&data.x, data.c, alpha, config.m)?;
    psi_conditional_from_basis(&basis, &data.y, sigma2, config)
}

fn psi_conditional_from_basis(
    basis: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    config: &MsimConfig,
) -> Result<PsiConditional> {
    let a = cumsum_matrix(config.m);
    let (mean, cov) = psi_gaussian_part(basis, &a, y, sigma2, config.prior_var)?;
    let sigma = CovStructure::dense(cov)?;
    let constraints = monotone_constraints(config.m)?;
    Ok(match config.prior {
        PsiPrior::Soft { eta } => PsiConditional::Soft(SoftTmvnParams::new(mean, sigma, constraints, eta)?),
        PsiPrior::Hard => PsiConditional::Hard(HardTmvn::new(mean, sigma, constraints)?),
    })
}

fn log_likelihood(basis: &DMatrix<f64>, theta: &DVector<f64>, y: &DVector<f64>, sigma2: f64) -> f64 {
    -0.5 * (y - basis * theta).norm_squared() / sigma2
}

/// Fitter state together with the basis matrix at the current `alpha`.
#[derive(Debug, Clone)]
pub struct SweepState {
    pub model: MsimModel,
    basis: DMatrix<f64>,
}

impl SweepState {
    pub fn new(model: MsimModel, data: &MsimData) -> Result<Self> {
        let basis = basis_matrix(&data.x, data.c, &model.alpha, model.m)?;
        Ok(Self { model, basis })
    }
}

/// One Metropolis-within-Gibbs sweep. Returns whether the `beta` proposal was accepted.
pub fn msim_gibbs_sweep<R: Rng + ?Sized>(
    state: &mut SweepState,
    data: &MsimData,
    config: &MsimConfig,
    rng: &mut R,
) -> Result<bool> {
    sweep_with_scale(state, data, config, config.proposal_sd, rng)
}

fn sweep_with_scale<R: Rng + ?Sized>(
    state: &mut SweepState,
    data: &MsimData,
    config: &MsimConfig,
    proposal_sd: f64,
    rng: &mut R,
) -> Result<bool> {
    let model = &mut state.model;
    check_dim("psi", config.m + 1, model.psi.len())?;

    // psi | alpha, sigma^2
    match psi_conditional_from_basis(&state.basis, &data.y, model.sigma2, config)? {
        PsiConditional::Soft(params) => {
            let kernel = BlockedGibbs::new(&params)?;
            let mut inner = ChainState::new(model.psi.clone(), params.constraints.len());
            for _ in 0..config.soft_inner_steps {
                inner = kernel.step(&inner, rng)?;
            }
            model.psi = inner.theta;
        }
        PsiConditional::Hard(target) => {
            let spec = ChainSpec::new(0, config.hard_inner_sweeps, 1, 0)
                .with_init(Init::Point(model.psi.as_slice().to_vec()));
            model.psi = gibbs_tmvn_with(&target, &spec, rng)?.row(0);
        }
    }
    let theta = model.theta();

    // sigma^2 | psi, alpha
    let n = data.n() as f64;
    let rss = (&data.y - &state.basis * &theta).norm_squared();
    let shape = config.sigma2_shape + 0.5 * n;
    let rate = config.sigma2_rate + 0.5 * rss;
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    model.sigma2 = 1.0 / gamma.sample(rng);

    // beta | psi, sigma^2: random-walk Metropolis on beta-space
    let proposal = DVector::from_fn(model.beta.len(), |j, _| {
        model.beta[j] + proposal_sd * rng.sample::<f64, _>(StandardNormal)
    });
    let norm = proposal.norm();
    if !(norm > 0.0) {
        return Ok(false);
    }
    let alpha_new = &proposal / norm;
    let basis_new = basis_matrix(&data.x, data.c, &alpha_new, config.m)?;
    let log_ratio = log_likelihood(&basis_new, &theta, &data.y, model.sigma2)
        - log_likelihood(&state.basis, &theta, &data.y, model.sigma2)
        - 0.5 * (proposal.norm_squared() - model.beta.norm_squared());
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        model.beta = proposal;
        model.alpha = alpha_new;
        state.basis = basis_new;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Retained draws and chain statistics from one fit.
#[derive(Debug, Clone)]
pub struct MsimFit {
    /// `n_samples x p`.
    pub alpha_draws: DMatrix<f64>,
    /// `n_samples x (M+1)`.
    pub psi_draws: DMatrix<f64>,
    pub sigma2_draws: Vec<f64>,
    /// Acceptance rate of the `beta` step after burn-in.
    pub beta_acceptance: f64,
    /// Proposal sd in force after burn-in.
    pub proposal_sd: f64,
    pub wall_seconds: f64,
}

pub fn fit_msim(data: &MsimData, config: &MsimConfig, spec: &ChainSpec) -> Result<MsimFit> {
    let mut rng = stream_rng(spec.seed, 0);
    fit_msim_with(data, config, spec, &mut rng)
}

pub fn fit_msim_with(data: &MsimData, config: &MsimConfig, spec: &ChainSpec, rng: &mut ChainRng) -> Result<MsimFit> {
    config.validate()?;
    spec.validate()?;
    let start = Instant::now();
    let model = MsimModel::initial(data, config.m)?;
    let mut state = SweepState::new(model, data)?;
    let (p, k) = (data.p(), config.m + 1);
    let mut alpha_buf = Vec::with_capacity(spec.n_samples * p);
    let mut psi_buf = Vec::with_capacity(spec.n_samples * k);
    let mut sigma2_draws = Vec::with_capacity(spec.n_samples);
    let mut accepted = 0usize;
    let mut batch_accepted = 0usize;
    let mut proposal_sd = config.proposal_sd;
    // Scales from the second half of burn-in are averaged on the log scale
    // and the average is frozen for the retained phase.
    let (mut log_sd_sum, mut log_sd_count) = (0.0, 0usize);
    let total = spec.total_iterations();
    for iter in 1..=total {
        let acc = sweep_with_scale(&mut state, data, config, proposal_sd, rng)?;
        if iter > spec.burn_in {
            accepted += usize::from(acc);
        } else if config.adapt_proposal {
            batch_accepted += usize::from(acc);
            if iter % ADAPT_BATCH == 0 {
                let rate = batch_accepted as f64 / ADAPT_BATCH as f64;
                let gain = 2.0 / ((iter / ADAPT_BATCH) as f64).sqrt();
                proposal_sd *= (gain * (rate - config.target_acceptance)).exp();
                batch_accepted = 0;
                if 2 * iter > spec.burn_in {
                    log_sd_sum += proposal_sd.ln();
                    log_sd_count += 1;
                }
            }
            if iter == spec.burn_in && log_sd_count > 0 {
                proposal_sd = (log_sd_sum / log_sd_count as f64).exp();
            }
        }
        if spec.keeps(iter) {
            alpha_buf.extend(state.model.alpha.iter());
            psi_buf.extend(state.model.psi.iter());
            sigma2_draws.push(state.model.sigma2);
        }
    }
    let n = sigma2_draws.len();
    Ok(MsimFit {
        alpha_draws: DMatrix::from_row_slice(n, p, &alpha_buf),
        psi_draws: DMatrix::from_row_slice(n, k, &psi_buf),
        sigma2_draws,
        beta_acceptance: accepted as f64 / (total - spec.burn_in) as f64,
        proposal_sd,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

impl MsimFit {
    pub fn m(&self) -> usize {
        self.psi_draws.ncols() - 1
    }

    /// Mean ESS over the coordinates of `alpha`.
    pub fn alpha_ess(&self) -> Option<f64> {
        mean_ess(&self.alpha_draws)
    }

    pub fn psi_ess(&self) -> Option<f64> {
        mean_ess(&self.psi_draws)
    }

    /// Fraction of retained draws whose fitted link decreases somewhere on
    /// a 101-point grid of `[-1, 1]`.
    pub fn monotonicity_violation_rate(&self) -> f64 {
        monotonicity_violation_rate(&self.psi_draws, self.m())
    }

    /// Posterior predictive mean at the rows of `x_new`.
    pub fn predict(&self, x_new: &DMatrix<f64>, c: f64) -> Result<DVector<f64>> {
        msim_predict(&self.alpha_draws, &self.psi_draws, x_new, c)
    }
}

fn mean_ess(draws: &DMatrix<f64>) -> Option<f64> {
    let values: Vec<f64> = draws
        .column_iter()
        .filter_map(|c| ess(c.as_slice()).ok())
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub const MONOTONE_GRID: usize = 101;

pub fn monotonicity_violation_rate(psi_draws: &DMatrix<f64>, m: usize) -> f64 {
    let grid: Vec<DVector<f64>> = (0..MONOTONE_GRID)
        .map(|i| {
            let t = -1.0 + 2.0 * i as f64 / (MONOTONE_GRID - 1) as f64;
            transformed_basis(m, t).expect("grid lies in [-1, 1]")
        })
        .collect();
    let a = cumsum_matrix(m);
    let n = psi_draws.nrows();
    if n == 0 {
        return 0.0;
    }
    let violations = psi_draws
        .row_iter()
        .filter(|row| {
            let theta = &a * row.transpose();
            let f: Vec<f64> = grid.iter().map(|b| b.dot(&theta)).collect();
            f.windows(2).any(|w| w[1] < w[0] - 1e-12 * w[0].abs().max(1.0))
        })
        .count();
    violations as f64 / n as f64
}

/// Average over draws of `B~_M(x^T alpha / c) . A psi`.
pub fn msim_predict(
    alpha_draws: &DMatrix<f64>,
    psi_draws: &DMatrix<f64>,
    x_new: &DMatrix<f64>,
    c: f64,
) -> Result<DVector<f64>> {
    check_dim("draw count", alpha_draws.nrows(), psi_draws.nrows())?;
    check_dim("covariates", alpha_draws.ncols(), x_new.ncols())?;
    if psi_draws.nrows() == 0 || psi_draws.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    let m = psi_draws.ncols() - 1;
    let a = cumsum_matrix(m);
    let mut total = DVector::zeros(x_new.nrows());
    for (alpha, psi) in alpha_draws.row_iter().zip(psi_draws.row_iter()) {
        let theta = &a * psi.transpose();
        total += basis_matrix(x_new, c, &alpha.transpose(), m)? * theta;
    }
    Ok(total / psi_draws.nrows() as f64)
}

pub fn mean_squared_error(pred: &DVector<f64>, target: &DVector<f64>) -> Result<f64> {
    check_dim("target", pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((pred - target).norm_squared() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bernstein_values() {
        let b = bernstein_basis(2, 0.5).unwrap();
        assert!((b - DVector::from_vec(vec![0.25, 0.5, 0.25])).amax() < 1e-15);
        assert_eq!(bernstein_basis(4, 0.0).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(bernstein_basis(4, 1.0).unwrap().as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(bernstein_basis(3, 1.1).is_err());
        assert!(transformed_basis(3, -1.01).is_err());
        let t = transformed_basis(5, -1.0).unwrap();
        assert_eq!(t[0], 0.5);
        assert!(t.rows(1, 5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transformed_basis_is_scaled_beta_density() {
        // B~_{M,j}(t) = q_j(t) / (M + 1), q_j the density of 2U - 1, U ~ Beta(j+1, M-j+1)
        use statrs::distribution::{Beta, Continuous};
        let m = 6;
        for &t in &[-0.9, -0.2, 0.4, 0.95] {
            let b = transformed_basis(m, t).unwrap();
            for j in 0..=m {
                let beta = Beta::new((j + 1) as f64, (m - j + 1) as f64).unwrap();
                let q = 0.5 * beta.pdf(0.5 * (t + 1.0));
                assert!((b[j] - q / (m + 1) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cumsum_and_differences() {
        let a = cumsum_matrix(4);
        let e0 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&a * e0, DVector::from_element(5, 1.0));
        let diff = DMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                1.0
            } else if j + 1 == i {
                -1.0
            } else {
                0.0
            }
        });
        assert!((&a * &diff - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn partition_identities(m in 0usize..25, t in -1.0..=1.0f64, c in -5.0..5.0f64) {
            let b = transformed_basis(m, t).unwrap();
            prop_assert!((b.sum() - 0.5).abs() < 1e-12);
            prop_assert!(b.iter().all(|&v| v >= 0.0));
            let theta = DVector::from_element(m + 1, c);
            prop_assert!((b.dot(&theta) - c / 2.0).abs() < 1e-12);
        }

        #[test]
        fn nonnegative_increments_give_nondecreasing_coefficients(psi in prop::collection::vec(-1.0..1.0f64, 6)) {
            let theta = cumsum_matrix(5) * DVector::from_vec(psi.clone());
            let increasing = theta.as_slice().windows(2).all(|w| w[1] >= w[0]);
            prop_assert_eq!(increasing, psi[1..].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn true_theta_pattern() {
        let t = true_theta(20);
        assert_eq!(t.as_slice(), &THETA_PATTERN);
        assert!(t.as_slice().windows(2).all(|w| w[1] >= w[0]));
        let t10 = true_theta(10);
        assert_eq!(t10.as_slice(), &[-1.0, -1.0, -1.0, -0.5, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn generated_data_is_reproducible_and_bounded() {
        let a = gen_msim_data(50, 3, 10, 5).unwrap();
        let b = gen_msim_data(50, 3, 10, 5).unwrap();
        assert_eq!(a.train, b.train);
        let alpha = DVector::from_vec(a.truth.alpha.clone());
        assert!((alpha.norm() - 1.0).abs() < 1e-12);
        let index = &a.train.x * &alpha / a.train.c;
        assert!(index.amax() <= 1.0);
        let index = &a.test_x * &alpha / a.train.c;
        assert!(index.amax() <= 1.0);
    }

    #[test]
    fn perfect_recovery_has_zero_error() {
        let data = gen_msim_data_with(100, 50, 3, 10, 0.0, 9).unwrap();
        let alpha = DMatrix::from_row_slice(1, 3, &data.truth.alpha);
        let mut diff = DVector::from_vec(data.truth.theta.clone());
        for j in (1..diff.len()).rev() {
            diff[j] -= diff[j - 1];
        }
        let psi = DMatrix::from_row_slice(1, diff.len(), diff.as_slice());
        let pred = msim_predict(&alpha, &psi, &data.test_x, data.train.c).unwrap();
        assert!(mean_squared_error(&pred, &data.test_f).unwrap() < 1e-20);
        assert!(mean_squared_error(&pred, &data.test_y).unwrap() == 0.0);
    }

    #[test]
    fn constant_theta_predicts_half() {
        let alpha = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
        let mut psi = DMatrix::zeros(1, 5);
        psi[(0, 0)] = 3.0;
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.5, 0.3, 0.9, -0.1]);
        let pred = msim_predict(&alpha, &psi, &x, 2.0).unwrap();
        assert!((pred - DVector::from_element(3, 1.5)).amax() < 1e-12);
    }

    #[test]
    fn psi_conditional_matches_dense_algebra() {
        let data = gen_msim_data(20, 2, 3, 1).unwrap().train;
        let alpha = DVector::from_vec(vec![0.6, 0.8]);
        let sigma2 = 0.3;
        let config = MsimConfig::new(3, PsiPrior::Soft { eta: 500.0 });
        let PsiConditional::Soft(p) = psi_conditional(&data, &alpha, sigma2, &config).unwrap() else {
            panic!("expected soft conditional")
        };
        let b = basis_matrix(&data.x, data.c, &alpha, 3).unwrap();
        let d = &b * cumsum_matrix(3);
        let prec = d.transpose() * &d / sigma2 + DMatrix::identity(4, 4) / 25.0;
        let cov = prec.clone().try_inverse().unwrap();
        let mean = &cov * d.transpose() * &data.y / sigma2;
        assert!((&p.mu - &mean).amax() < 1e-10 * mean.amax().max(1.0));
        assert!((p.sigma.to_dense() - &cov).amax() < 1e-10 * cov.amax());
        assert_eq!(p.eta, 500.0);
        let axes = p.constraints.axes().unwrap();
        assert_eq!(axes, vec![(1, Sign::Positive), (2, Sign::Positive), (3, Sign::Positive)]);
    }

    #[test]
    fn huge_noise_variance_gives_prior() {
        let data = gen_msim_data(20, 2, 3, 1).unwrap().train;
        let b = basis_matrix(&data.x, data.c, &DVector::from_vec(vec![1.0, 0.0]), 3).unwrap();
        let (mean, cov) = psi_gaussian_part(&b, &cumsum_matrix(3), &data.y, 1e12, 25.0).unwrap();
        assert!(mean.amax() < 1e-8);
        assert!((cov - DMatrix::<f64>::identity(4, 4) * 25.0).amax() < 1e-6);
    }

    #[test]
    fn inverse_gamma_prior_moments() {
        let (shape, rate): (f64, f64) = (2.1, 1.1);
        let mean = rate / (shape - 1.0);
        let var = rate * rate / ((shape - 1.0).powi(2) * (shape - 2.0));
        assert!((mean - 1.0).abs() < 1e-12);
        assert!((var - 10.0).abs() < 1e-9);
    }

    #[test]
    fn scaling_beta_leaves_alpha_unchanged() {
        let a = MsimModel::new(3, DVector::zeros(4), DVector::from_vec(vec![0.3, -0.4]), 1.0).unwrap();
        let b = MsimModel::new(3, DVector::zeros(4), DVector::from_vec(vec![0.6, -0.8]), 1.0).unwrap();
        assert!((&a.alpha - &b.alpha).amax() < 1e-15);
        assert!((a.alpha.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_fits_run_for_both_priors() {
        let data = gen_msim_data(60, 2, 5, 3).unwrap();
        let spec = ChainSpec::new(50, 2, 40, 4);
        for prior in [PsiPrior::Soft { eta: 500.0 }, PsiPrior::Hard] {
            let config = MsimConfig::new(5, prior);
            let fit = fit_msim(&data.train, &config, &spec).unwrap();
            assert_eq!(fit.psi_draws.nrows(), 40);
            assert!((0.0..=1.0).contains(&fit.beta_acceptance));
            for row in fit.alpha_draws.row_iter() {
                assert!((row.norm() - 1.0).abs() < 1e-12);
            }
            if prior == PsiPrior::Hard {
                assert!(fit.psi_draws.columns(1, 5).iter().all(|&v| v >= 0.0));
                assert_eq!(fit.monotonicity_violation_rate(), 0.0);
            }
            let again = fit_msim(&data.train, &config, &spec).unwrap();
            assert_eq!(fit.psi_draws, again.psi_draws);
        }
    }
}
