//! Samplers for the soft tMVN target: the Polya-Gamma blocked Gibbs chain
//! and unadjusted Langevin Monte Carlo, plus density, gradient and Hessian.
//!
//! The soft tMVN density is the posterior of a pseudo-logistic regression
//! with rows `W_i = eta a_i`, labels `t_i = 1(s_i = 1)` and prior `N(mu, Sigma)`.
//! Given `omega_i ~ PG(1, W_i^T theta)`, `theta` is Gaussian with precision
//! `W^T Omega W + Sigma^-1` and is drawn as one block.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::batch::{BatchBuilder, ChainSpec, Init, InitName, SampleBatch};
use crate::constraints::{sigmoid, Sign, SoftTmvnParams};
use crate::error::{check_dim, Error, Result};
use crate::polya_gamma::sample_pg1;
use crate::rng::{stream_rng, ChainRng};
use crate::structured::{std_normal_vec, CovStructure, ScaledRowsPosterior};

/// Unnormalized `log gamma_eta(theta)`.
pub fn log_density_unnorm(p: &SoftTmvnParams, theta: &DVector<f64>) -> Result<f64> {
    check_dim("theta", p.dim(), theta.len())?;
    let centered = theta - &p.mu;
    let quad = centered.dot(&p.sigma.precision_mul(&centered));
    Ok(-0.5 * quad + p.constraints.log_soft_indicator(theta, p.eta)?)
}

/// Gradient of `-log gamma_eta`:
/// `Sigma^-1 (theta - mu) - sum_i eta s_i (1 - sigmoid(eta s_i a_i^T theta)) a_i`.
pub fn grad_neg_log_density(p: &SoftTmvnParams, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("theta", p.dim(), theta.len())?;
    let mut g = p.sigma.precision_mul(&(theta - &p.mu));
    for row in p.constraints.rows() {
        let z = p.eta * row.signed_value(theta);
        let coef = p.eta * row.sign.value() * sigmoid(-z);
        for (gk, ak) in g.iter_mut().zip(&row.a) {
            *gk -= coef * ak;
        }
    }
    Ok(g)
}

/// Hessian of `-log gamma_eta`: `Sigma^-1 + sum_i eta^2 sigma(z_i)(1 - sigma(z_i)) a_i a_i^T`.
pub fn hessian_neg_log_density(p: &SoftTmvnParams, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_dim("theta", p.dim(), theta.len())?;
    let mut h = p.sigma.precision_dense();
    for row in p.constraints.rows() {
        let z = p.eta * row.signed_value(theta);
        let weight = p.eta * p.eta * sigmoid(z) * sigmoid(-z);
        let a = DVector::from_column_slice(&row.a);
        h.ger(weight, &a, &a, 1.0);
    }
    Ok(h)
}

/// Pseudo-logistic regression view of the constraints.
#[derive(Debug, Clone)]
pub struct PseudoLogistic {
    /// `r x d`, row `i` is `eta * a_i`.
    pub w: DMatrix<f64>,
    /// `t_i = 1(s_i = 1)`.
    pub t: Vec<bool>,
    /// `t - 1/2`.
    pub kappa: DVector<f64>,
}

impl PseudoLogistic {
    pub fn new(p: &SoftTmvnParams) -> Self {
        let rows = p.constraints.rows();
        let (r, d) = (rows.len(), p.dim());
        let w = DMatrix::from_fn(r, d, |i, j| p.eta * rows[i].a[j]);
        let t: Vec<bool> = rows.iter().map(|row| row.sign == Sign::Positive).collect();
        let kappa = DVector::from_iterator(r, t.iter().map(|&ti| if ti { 0.5 } else { -0.5 }));
        Self { w, t, kappa }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// State of the blocked Gibbs chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: DVector<f64>,
    pub omega: DVector<f64>,
    pub iteration: usize,
}

impl ChainState {
    pub fn new(theta: DVector<f64>, r: usize) -> Self {
        Self {
            theta,
            omega: DVector::from_element(r, 0.25),
            iteration: 0,
        }
    }
}

/// Smallest `omega` used when forming `Omega^{-1/2} kappa`.
const OMEGA_FLOOR: f64 = 1e-300;

/// Polya-Gamma blocked Gibbs kernel for one soft tMVN target. Holds the
/// pseudo-logistic rows and the `Sigma W^T` cache shared by every step.
#[derive(Debug, Clone)]
pub struct BlockedGibbs<'a> {
    params: &'a SoftTmvnParams,
    logistic: PseudoLogistic,
    posterior: ScaledRowsPosterior,
}

impl<'a> BlockedGibbs<'a> {
    pub fn new(params: &'a SoftTmvnParams) -> Result<Self> {
        let logistic = PseudoLogistic::new(params);
        let posterior = ScaledRowsPosterior::new(logistic.w.clone(), &params.sigma)?;
        Ok(Self {
            params,
            logistic,
            posterior,
        })
    }

    pub fn params(&self) -> &SoftTmvnParams {
        self.params
    }

    pub fn logistic(&self) -> &PseudoLogistic {
        &self.logistic
    }

    /// One sweep: `omega_i ~ PG(1, W_i^T theta)`, then
    /// `theta ~ N(mu_omega, Sigma_omega)` drawn as `mu_bar + theta_bar` with
    /// `Phi = Omega^{1/2} W` and `alpha = Omega^{-1/2} kappa`.
    pub fn step<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> Result<ChainState> {
        check_dim("theta", self.params.dim(), state.theta.len())?;
        let tilts = &self.logistic.w * &state.theta;
        let mut omega = DVector::zeros(tilts.len());
        for (o, &c) in omega.iter_mut().zip(tilts.iter()) {
            *o = sample_pg1(c, rng)?;
        }
        let scale = omega.map(|o| o.max(OMEGA_FLOOR).sqrt());
        let alpha = self.logistic.kappa.component_div(&scale);
        let theta = self
            .posterior
            .sample_shifted(&scale, &alpha, &self.params.mu, &self.params.sigma, rng)?;
        Ok(ChainState {
            theta,
            omega,
            iteration: state.iteration + 1,
        })
    }
}

/// Single blocked Gibbs transition. Builds the kernel cache on every call;
/// long chains should hold a [`BlockedGibbs`] instead.
pub fn gibbs_step<R: Rng + ?Sized>(p: &SoftTmvnParams, state: &ChainState, rng: &mut R) -> Result<ChainState> {
    BlockedGibbs::new(p)?.step(state, rng)
}

/// Starting point for a chain on `p`.
pub fn initial_point(p: &SoftTmvnParams, init: &Init) -> Result<DVector<f64>> {
    match init {
        Init::Named(InitName::Origin) => Ok(DVector::zeros(p.dim())),
        Init::Point(v) => {
            check_dim("init", p.dim(), v.len())?;
            Ok(DVector::from_column_slice(v))
        }
        Init::Named(InitName::Mean) => {
            let mut theta = p.mu.clone();
            if let Some(axes) = p.constraints.axes() {
                for (k, sign) in axes {
                    if sign.value() * theta[k] < 0.0 {
                        theta[k] = -theta[k];
                    }
                }
            }
            Ok(theta)
        }
    }
}

/// Run the blocked Gibbs chain for `spec` and keep the thinned draws.
pub fn run_chain(p: &SoftTmvnParams, spec: &ChainSpec) -> Result<SampleBatch> {
    let mut rng = stream_rng(spec.seed, 0);
    run_chain_with(p, spec, &mut rng)
}

pub fn run_chain_with(p: &SoftTmvnParams, spec: &ChainSpec, rng: &mut ChainRng) -> Result<SampleBatch> {
    spec.validate()?;
    let kernel = BlockedGibbs::new(p)?;
    let mut state = ChainState::new(initial_point(p, &spec.init)?, p.constraints.len());
    let mut out = BatchBuilder::new(p.dim(), spec.n_samples);
    for iter in 1..=spec.total_iterations() {
        state = kernel.step(&state, rng)?;
        if spec.keeps(iter) {
            out.push(iter, &state.theta);
        }
    }
    Ok(out.finish())
}

/// Deterministic part of the Langevin update with an explicit noise vector.
pub fn lmc_update(p: &SoftTmvnParams, theta: &DVector<f64>, h: f64, xi: &DVector<f64>) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("LMC step size must be positive, got {h}")));
    }
    check_dim("xi", p.dim(), xi.len())?;
    let g = grad_neg_log_density(p, theta)?;
    Ok(theta - g * h + xi * (2.0 * h).sqrt())
}

/// Unadjusted first-order Langevin step
/// `theta' = theta - h grad f(theta) + sqrt(2h) xi`. No Metropolis
/// correction: the chain is biased at any finite `h`.
pub fn lmc_step<R: Rng + ?Sized>(p: &SoftTmvnParams, theta: &DVector<f64>, h: f64, rng: &mut R) -> Result<DVector<f64>> {
    let xi = std_normal_vec(p.dim(), rng);
    lmc_update(p, theta, h, &xi)
}

pub fn run_lmc(p: &SoftTmvnParams, h: f64, spec: &ChainSpec) -> Result<SampleBatch> {
    let mut rng = stream_rng(spec.seed, 0);
    run_lmc_with(p, h, spec, &mut rng)
}

pub fn run_lmc_with(p: &SoftTmvnParams, h: f64, spec: &ChainSpec, rng: &mut ChainRng) -> Result<SampleBatch> {
    spec.validate()?;
    let mut theta = initial_point(p, &spec.init)?;
    let mut out = BatchBuilder::new(p.dim(), spec.n_samples);
    for iter in 1..=spec.total_iterations() {
        theta = lmc_step(p, &theta, h, rng)?;
        if spec.keeps(iter) {
            out.push(iter, &theta);
        }
    }
    Ok(out.finish())
}

/// The bivariate orthant example: `N(0, [[1, rho], [rho, 1]])` restricted
/// softly to the positive quadrant.
pub fn bivariate_orthant(rho: f64, eta: f64) -> Result<SoftTmvnParams> {
    let sigma = CovStructure::dense(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))?;
    SoftTmvnParams::new(
        DVector::zeros(2),
        sigma,
        crate::constraints::ConstraintSet::orthant(2, 2)?,
        eta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{ConstraintRow, ConstraintSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_instance(seed: u64, d: usize, r: usize, eta: f64) -> SoftTmvnParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = CovStructure::dense(&a * a.transpose() + DMatrix::identity(d, d)).unwrap();
        let rows = (0..r)
            .map(|i| ConstraintRow {
                sign: if i % 2 == 0 { Sign::Positive } else { Sign::Negative },
                a: (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            })
            .collect();
        let mu = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        SoftTmvnParams::new(mu, sigma, ConstraintSet::new(d, rows).unwrap(), eta).unwrap()
    }

    #[test]
    fn density_without_constraints_vanishes_at_mean() {
        let mut p = random_instance(1, 3, 0, 10.0);
        p.constraints = ConstraintSet::unconstrained(3);
        assert!(log_density_unnorm(&p, &p.mu.clone()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_form_is_normal_kernel_times_logistic_cdf() {
        let sigma = CovStructure::identity(1);
        let c = ConstraintSet::orthant(1, 1).unwrap();
        let p = SoftTmvnParams::new(DVector::zeros(1), sigma, c, 7.0).unwrap();
        for &t in &[-1.0, -0.1, 0.0, 0.3, 2.0] {
            let expected = -0.5 * t * t + sigmoid(7.0 * t).ln();
            let got = log_density_unnorm(&p, &DVector::from_element(1, t)).unwrap();
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn log_concavity_spot_check() {
        let p = random_instance(2, 4, 3, 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t1 = std_normal_vec(4, &mut rng) * 2.0;
            let t2 = std_normal_vec(4, &mut rng) * 2.0;
            let mid = &t1 * 0.4 + &t2 * 0.6;
            let f = |t: &DVector<f64>| log_density_unnorm(&p, t).unwrap();
            assert!(f(&mid) >= 0.4 * f(&t1) + 0.6 * f(&t2) - 1e-9);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..10 {
            let p = random_instance(10 + seed, 4, 3, 2.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = std_normal_vec(4, &mut rng);
            let g = grad_neg_log_density(&p, &theta).unwrap();
            let step = 1e-5;
            for k in 0..4 {
                let mut plus = theta.clone();
                plus[k] += step;
                let mut minus = theta.clone();
                minus[k] -= step;
                let fd = -(log_density_unnorm(&p, &plus).unwrap() - log_density_unnorm(&p, &minus).unwrap()) / (2.0 * step);
                assert!((fd - g[k]).abs() < 1e-5, "seed {seed} k {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences_and_is_pd() {
        let p = random_instance(30, 4, 3, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let theta = std_normal_vec(4, &mut rng);
            let h = hessian_neg_log_density(&p, &theta).unwrap();
            let min_eig = h.clone().symmetric_eigen().eigenvalues.min();
            assert!(min_eig > 0.0);
            let step = 1e-6;
            for k in 0..4 {
                let mut plus = theta.clone();
                plus[k] += step;
                let mut minus = theta.clone();
                minus[k] -= step;
                let fd = (grad_neg_log_density(&p, &plus).unwrap() - grad_neg_log_density(&p, &minus).unwrap()) / (2.0 * step);
                assert!((fd - h.column(k)).amax() < 1e-4);
            }
        }
    }

    #[test]
    fn no_constraints_gives_gaussian_derivatives() {
        let mut p = random_instance(40, 3, 0, 1.0);
        p.constraints = ConstraintSet::unconstrained(3);
        let theta = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let g = grad_neg_log_density(&p, &theta).unwrap();
        assert_eq!(g, p.sigma.precision_mul(&(&theta - &p.mu)));
        assert_eq!(hessian_neg_log_density(&p, &theta).unwrap(), p.sigma.precision_dense());
    }

    #[test]
    fn pseudo_logistic_rows() {
        let p = random_instance(50, 3, 2, 100.0);
        let pl = PseudoLogistic::new(&p);
        for (i, row) in p.constraints.rows().iter().enumerate() {
            for j in 0..3 {
                assert_eq!(pl.w[(i, j)], 100.0 * row.a[j]);
            }
            assert_eq!(pl.kappa[i], if row.sign == Sign::Positive { 0.5 } else { -0.5 });
        }
    }

    #[test]
    fn chain_is_reproducible_and_sized() {
        let p = bivariate_orthant(0.5, 100.0).unwrap();
        let spec = ChainSpec::new(10, 3, 50, 99);
        let a = run_chain(&p, &spec).unwrap();
        assert_eq!(a.n_samples(), 50);
        assert_eq!(a, run_chain(&p, &spec).unwrap());
        assert_ne!(a, run_chain(&p, &ChainSpec::new(10, 3, 50, 100)).unwrap());
        let state = ChainState::new(DVector::zeros(2), 2);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(gibbs_step(&p, &state, &mut r1).unwrap(), gibbs_step(&p, &state, &mut r2).unwrap());
    }

    #[test]
    fn unconstrained_chain_draws_the_gaussian() {
        let sigma = CovStructure::dense(DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0])).unwrap();
        let mu = DVector::from_vec(vec![1.0, -2.0]);
        let p = SoftTmvnParams::new(mu, sigma, ConstraintSet::unconstrained(2), 100.0).unwrap();
        let batch = run_chain(&p, &ChainSpec::new(0, 1, 100_000, 4)).unwrap();
        let m = batch.means();
        let s = batch.sds();
        assert!((m[0] - 1.0).abs() < 4.0 * (2.0f64 / 1e5).sqrt());
        assert!((m[1] + 2.0).abs() < 4.0 * (1.0f64 / 1e5).sqrt());
        assert!((s[0] * s[0] - 2.0).abs() < 0.04);
        assert!((s[1] * s[1] - 1.0).abs() < 0.02);
    }

    #[test]
    fn default_init_flips_violating_orthant_coordinates() {
        let c = ConstraintSet::axis_aligned(3, [(0, Sign::Positive), (1, Sign::Negative)]).unwrap();
        let p = SoftTmvnParams::new(DVector::from_vec(vec![-1.0, 2.0, -3.0]), CovStructure::identity(3), c, 10.0).unwrap();
        let init = initial_point(&p, &Init::default()).unwrap();
        assert_eq!(init.as_slice(), &[1.0, -2.0, -3.0]);
        assert!(initial_point(&p, &Init::Point(vec![1.0])).is_err());
    }

    #[test]
    fn lmc_fixed_point_and_determinism() {
        let sigma = CovStructure::identity(2);
        let mu = DVector::from_vec(vec![0.3, -0.7]);
        let p = SoftTmvnParams::new(mu.clone(), sigma, ConstraintSet::unconstrained(2), 1.0).unwrap();
        let next = lmc_update(&p, &mu, 0.1, &DVector::zeros(2)).unwrap();
        assert_eq!(next, mu);
        assert!(lmc_update(&p, &mu, 0.0, &DVector::zeros(2)).is_err());

        let q = bivariate_orthant(0.5, 10.0).unwrap();
        let spec = ChainSpec::new(5, 2, 20, 8);
        assert_eq!(run_lmc(&q, 0.01, &spec).unwrap(), run_lmc(&q, 0.01, &spec).unwrap());
    }
}
