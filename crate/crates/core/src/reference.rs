//! Exact samplers and a quadrature oracle for the hard tMVN
//! `N(mu, Sigma)` restricted to `{theta : s_i a_i^T theta >= 0}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::batch::{BatchBuilder, ChainSpec, SampleBatch};
use crate::constraints::{log_sigmoid, ConstraintSet, Sign, SoftTmvnParams};
use crate::error::{check_dim, Error, Result};
use crate::gibbs::initial_point;
use crate::rng::stream_rng;
use crate::special::{norm_cdf, norm_quantile, norm_sf};
use crate::structured::CovStructure;

/// Hard-truncated multivariate normal.
#[derive(Debug, Clone)]
pub struct HardTmvn {
    pub mu: DVector<f64>,
    pub sigma: CovStructure,
    pub constraints: ConstraintSet,
}

impl HardTmvn {
    pub fn new(mu: DVector<f64>, sigma: CovStructure, constraints: ConstraintSet) -> Result<Self> {
        check_dim("mu", sigma.dim(), mu.len())?;
        check_dim("constraints", sigma.dim(), constraints.dim())?;
        Ok(Self { mu, sigma, constraints })
    }

    /// The hard target that a soft tMVN approximates.
    pub fn from_soft(p: &SoftTmvnParams) -> Self {
        Self {
            mu: p.mu.clone(),
            sigma: p.sigma.clone(),
            constraints: p.constraints.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Beyond this standardized bound the inverse CDF loses precision and the
/// tail is sampled by rejection instead.
const TAIL_SWITCH: f64 = 6.0;

/// Exact draw from `N(mean, sd^2)` truncated to `[lo, hi]`; either bound may be infinite.
pub fn sample_trunc_norm_1d<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(sd > 0.0) || !sd.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!("need finite mean and sd > 0, got ({mean}, {sd})")));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty truncation interval [{lo}, {hi}]")));
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let z = if a >= 0.0 {
        std_upper(a, b, rng)
    } else if b <= 0.0 {
        -std_upper(-b, -a, rng)
    } else {
        let (pa, pb) = (norm_cdf(a), norm_cdf(b));
        let u: f64 = rng.random();
        norm_quantile(pa + u * (pb - pa)).clamp(a, b)
    };
    Ok(mean + sd * z)
}

/// Standard normal truncated to `[a, b]` with `0 <= a < b`.
fn std_upper<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a <= TAIL_SWITCH {
        let (qa, qb) = (norm_sf(a), norm_sf(b));
        let u: f64 = rng.random();
        return (-norm_quantile(qb + u * (qa - qb))).clamp(a, b);
    }
    if b - a < 1.0 / a {
        // Narrow far-tail window: uniform proposal, density ratio bounded below by e^{-1}.
        loop {
            let x = a + (b - a) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= -0.5 * (x * x - a * a) {
                return x;
            }
        }
    }
    // Exponential proposal with the optimal rate for the tail beyond a.
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let x = a + e / lambda;
        if x > b {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (x - lambda).powi(2) {
            return x;
        }
    }
}

/// Interval for coordinate `k` implied by axis-aligned rows.
fn axis_bounds(d: usize, constraints: &ConstraintSet) -> Result<Vec<(f64, f64)>> {
    let axes = constraints.axes().ok_or_else(|| {
        Error::Unsupported("coordinatewise Gibbs needs constraints with a_i = e_k".into())
    })?;
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); d];
    for (k, sign) in axes {
        match sign {
            Sign::Positive => bounds[k].0 = 0.0,
            Sign::Negative => bounds[k].1 = 0.0,
        }
        if !(bounds[k].0 < bounds[k].1) {
            return Err(Error::Unsupported(format!("coordinate {k} is constrained to a single point")));
        }
    }
    Ok(bounds)
}

/// Coordinatewise Gibbs sampler for the hard tMVN: each coordinate is drawn
/// from its univariate truncated-normal full conditional. Only axis-aligned
/// constraints are supported.
pub fn gibbs_tmvn(target: &HardTmvn, spec: &ChainSpec) -> Result<SampleBatch> {
    let mut rng = stream_rng(spec.seed, 0);
    gibbs_tmvn_with(target, spec, &mut rng)
}

/// [`gibbs_tmvn`] driven by a caller-owned generator; `spec.seed` is ignored.
pub fn gibbs_tmvn_with<R: Rng + ?Sized>(target: &HardTmvn, spec: &ChainSpec, rng: &mut R) -> Result<SampleBatch> {
    spec.validate()?;
    let d = target.dim();
    let bounds = axis_bounds(d, &target.constraints)?;
    let q = target.sigma.precision_dense();
    let cond_sd: Vec<f64> = (0..d).map(|k| q[(k, k)].recip().sqrt()).collect();

    let soft_view = SoftTmvnParams {
        mu: target.mu.clone(),
        sigma: target.sigma.clone(),
        constraints: target.constraints.clone(),
        eta: 1.0,
    };
    let mut theta = initial_point(&soft_view, &spec.init)?;
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        theta[k] = theta[k].clamp(lo, hi);
    }
    let mut dev = &theta - &target.mu;

    let mut out = BatchBuilder::new(d, spec.n_samples);
    for iter in 1..=spec.total_iterations() {
        for k in 0..d {
            let qk = q.column(k);
            let cross = qk.dot(&dev) - q[(k, k)] * dev[k];
            let mean = target.mu[k] - cross / q[(k, k)];
            let (lo, hi) = bounds[k];
            let x = sample_trunc_norm_1d(mean, cond_sd[k], lo, hi, rng)?;
            theta[k] = x;
            dev[k] = x - target.mu[k];
        }
        if spec.keeps(iter) {
            out.push(iter, &theta);
        }
    }
    Ok(out.finish())
}

/// Accept/reject from `N(mu, Sigma)` onto the constraint set. Returns the draw
/// and the number of proposals used.
pub fn rejection_tmvn<R: Rng + ?Sized>(target: &HardTmvn, rng: &mut R, max_tries: u64) -> Result<(DVector<f64>, u64)> {
    for tries in 1..=max_tries {
        let theta = &target.mu + target.sigma.sample_prior(rng);
        if target.constraints.hard_indicator(&theta)? {
            return Ok((theta, tries));
        }
    }
    Err(Error::MaxTriesExhausted { tries: max_tries })
}

/// `n` independent rejection draws on chain stream 0 of `seed`, plus the total proposal count.
pub fn rejection_batch(target: &HardTmvn, n: usize, seed: u64, max_tries: u64) -> Result<(SampleBatch, u64)> {
    rejection_batch_with(target, n, &mut stream_rng(seed, 0), max_tries)
}

pub fn rejection_batch_with<R: Rng + ?Sized>(
    target: &HardTmvn,
    n: usize,
    rng: &mut R,
    max_tries: u64,
) -> Result<(SampleBatch, u64)> {
    let mut out = BatchBuilder::new(target.dim(), n);
    let mut total = 0;
    for i in 1..=n {
        let (theta, tries) = rejection_tmvn(target, rng, max_tries)?;
        total += tries;
        out.push(i, &theta);
    }
    Ok((out.finish(), total))
}

/// Density whose moments [`quadrature_moments`] computes.
#[derive(Debug, Clone, Copy)]
pub enum QuadTarget<'a> {
    Soft(&'a SoftTmvnParams),
    Hard(&'a HardTmvn),
}

impl QuadTarget<'_> {
    fn parts(&self) -> (&DVector<f64>, &CovStructure, &ConstraintSet, Option<f64>) {
        match self {
            QuadTarget::Soft(p) => (&p.mu, &p.sigma, &p.constraints, Some(p.eta)),
            QuadTarget::Hard(h) => (&h.mu, &h.sigma, &h.constraints, None),
        }
    }
}

/// Tensor-product midpoint grid on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Nodes per axis on the fine level; the coarse level uses half as many.
    pub nodes: usize,
}

/// Default half-width of the grid, in marginal standard deviations.
pub const GRID_HALF_WIDTH: f64 = 8.0;
pub const DEFAULT_NODES: usize = 2048;
/// Accepted error estimate for quadrature moments.
pub const QUADRATURE_TOL: f64 = 1e-6;

impl QuadratureGrid {
    /// `mu +- 8 sd` per axis. For hard axis-aligned constraints the box is
    /// clipped at the boundary so the integrand is smooth on it. For soft
    /// targets the node count grows with `eta` to resolve the sigmoid.
    pub fn for_target(target: QuadTarget<'_>) -> Result<Self> {
        let (mu, sigma, constraints, eta) = target.parts();
        let d = mu.len();
        if d == 0 || d > 2 {
            return Err(Error::Unsupported(format!("quadrature supports d in {{1, 2}}, got {d}")));
        }
        let sd = sigma.diag().map(f64::sqrt);
        let mut lo: Vec<f64> = (0..d).map(|k| mu[k] - GRID_HALF_WIDTH * sd[k]).collect();
        let mut hi: Vec<f64> = (0..d).map(|k| mu[k] + GRID_HALF_WIDTH * sd[k]).collect();
        let mut nodes = DEFAULT_NODES;
        match eta {
            None => {
                if let Some(axes) = constraints.axes() {
                    for (k, sign) in axes {
                        match sign {
                            Sign::Positive => lo[k] = lo[k].max(0.0),
                            Sign::Negative => hi[k] = hi[k].min(0.0),
                        }
                    }
                }
            }
            Some(eta) => {
                let steep = constraints
                    .rows()
                    .iter()
                    .map(|r| r.a.iter().map(|v| v.abs()).fold(0.0, f64::max))
                    .fold(0.0, f64::max);
                let width = (0..d).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
                // fine spacing at most half the sigmoid transition width 1/(eta |a|)
                let needed = (2.0 * width * eta * steep).ceil() as usize;
                nodes = nodes.max(needed.next_power_of_two());
            }
        }
        let grid = Self { lo, hi, nodes };
        grid.validate(d)?;
        Ok(grid)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        check_dim("grid lo", d, self.lo.len())?;
        check_dim("grid hi", d, self.hi.len())?;
        if self.nodes < 64 || self.nodes % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs an even node count >= 64, got {}",
                self.nodes
            )));
        }
        for k in 0..d {
            if !(self.lo[k] < self.hi[k]) || !self.lo[k].is_finite() || !self.hi[k].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "grid axis {k} has bounds [{}, {}]",
                    self.lo[k], self.hi[k]
                )));
            }
        }
        Ok(())
    }

    /// Midpoint nodes of axis `k` at `n` points.
    fn axis_nodes(&self, k: usize, n: usize) -> (Vec<f64>, f64) {
        let h = (self.hi[k] - self.lo[k]) / n as f64;
        ((0..n).map(|i| self.lo[k] + (i as f64 + 0.5) * h).collect(), h)
    }
}

/// Normalized first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Largest change in any reported moment between the fine rule and its
    /// Richardson extrapolation against the half-resolution rule.
    pub error_estimate: f64,
}

/// Raw integrals `[Z, int x_k, int x_k x_l (k <= l)]`.
type Raw = Vec<f64>;

fn raw_1d(grid: &QuadratureGrid, n: usize, logf: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Raw {
    let (xs, h) = grid.axis_nodes(0, n);
    let mut acc = vec![0.0; 3];
    for &x in &xs {
        let w = logf(&[x]).exp();
        acc[0] += w;
        acc[1] += w * x;
        acc[2] += w * x * x;
    }
    acc.iter().map(|v| v * h).collect()
}

fn raw_2d(grid: &QuadratureGrid, n: usize, logf: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Raw {
    let (xs, hx) = grid.axis_nodes(0, n);
    let (ys, hy) = grid.axis_nodes(1, n);
    let rows: Vec<[f64; 6]> = xs
        .par_iter()
        .map(|&x| {
            let mut acc = [0.0; 6];
            for &y in &ys {
                let w = logf(&[x, y]).exp();
                acc[0] += w;
                acc[1] += w * x;
                acc[2] += w * y;
                acc[3] += w * x * x;
                acc[4] += w * x * y;
                acc[5] += w * y * y;
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; 6];
    for row in &rows {
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }
    total.iter().map(|v| v * hx * hy).collect()
}

fn moments_from_raw(d: usize, raw: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let z = raw[0];
    let mean = DVector::from_fn(d, |k, _| raw[1 + k] / z);
    let mut cov = DMatrix::zeros(d, d);
    let mut idx = 1 + d;
    for k in 0..d {
        for l in k..d {
            let v = raw[idx] / z - mean[k] * mean[l];
            cov[(k, l)] = v;
            cov[(l, k)] = v;
            idx += 1;
        }
    }
    (mean, cov)
}

/// Mean and covariance of a 1-D or 2-D soft or hard tMVN by tensor-product
/// midpoint quadrature with one Richardson step. Fails if the self-reported
/// error exceeds [`QUADRATURE_TOL`].
pub fn quadrature_moments(target: QuadTarget<'_>, grid: &QuadratureGrid) -> Result<QuadratureMoments> {
    let (mu, sigma, constraints, eta) = target.parts();
    let d = mu.len();
    if d == 0 || d > 2 {
        return Err(Error::Unsupported(format!("quadrature supports d in {{1, 2}}, got {d}")));
    }
    grid.validate(d)?;
    let q = sigma.precision_dense();
    let rows: Vec<(f64, Vec<f64>)> = constraints.rows().iter().map(|r| (r.sign.value(), r.a.clone())).collect();
    let mu_v: Vec<f64> = mu.iter().copied().collect();
    let logf = move |x: &[f64]| -> f64 {
        let mut quad = 0.0;
        for k in 0..d {
            for l in 0..d {
                quad += (x[k] - mu_v[k]) * q[(k, l)] * (x[l] - mu_v[l]);
            }
        }
        let mut lf = -0.5 * quad;
        for (s, a) in &rows {
            let v = s * a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>();
            match eta {
                Some(eta) => lf += log_sigmoid(eta * v),
                None if v < 0.0 => return f64::NEG_INFINITY,
                None => {}
            }
        }
        lf
    };
    let raw = |n| if d == 1 { raw_1d(grid, n, &logf) } else { raw_2d(grid, n, &logf) };
    let fine = raw(grid.nodes);
    let coarse = raw(grid.nodes / 2);
    if !(fine[0] > 0.0) || !(coarse[0] > 0.0) {
        return Err(Error::InvalidParameter("target has no mass on the quadrature grid".into()));
    }
    let extrapolated: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
    let (mean_f, cov_f) = moments_from_raw(d, &fine);
    let (mean, cov) = moments_from_raw(d, &extrapolated);
    let error_estimate = (&mean - &mean_f).amax().max((&cov - &cov_f).amax());
    if !(error_estimate < QUADRATURE_TOL) {
        return Err(Error::QuadratureNotConverged {
            estimate: error_estimate,
            tolerance: QUADRATURE_TOL,
        });
    }
    Ok(QuadratureMoments { mean, cov, error_estimate })
}
