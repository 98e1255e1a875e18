//! Generators for the two benchmark families: a binary GP classification
//! posterior with a Matern Gram covariance, and a probit regression posterior
//! with the probit-block covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::constraints::{ConstraintSet, Sign, SoftTmvnParams};
use crate::error::{Error, Result};
use crate::reference::HardTmvn;
use crate::rng::{stream_rng, GENERATOR_STREAM};
use crate::structured::CovStructure;

pub use crate::kernel::matern as matern_kernel;

/// Smoothness used by the GP scenario unless configured otherwise.
pub const DEFAULT_NU: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    ProbitGp {
        n: usize,
        #[serde(default = "default_nu")]
        nu: f64,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    ProbitGauss {
        n_obs: usize,
        p: usize,
        #[serde(default = "default_lambda_range")]
        lambda_range: [f64; 2],
        #[serde(default)]
        seed: u64,
    },
}

impl ScenarioSpec {
    pub fn seed(&self) -> u64 {
        match *self {
            ScenarioSpec::ProbitGp { seed, .. } | ScenarioSpec::ProbitGauss { seed, .. } => seed,
        }
    }
}

fn default_nu() -> f64 {
    DEFAULT_NU
}

fn default_scale() -> f64 {
    1.0
}

fn default_lambda_range() -> [f64; 2] {
    [1.0 / 15.0, 1.0 / 5.0]
}

/// Generated truncation problem: zero mean, a covariance and sign constraints.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub sigma: CovStructure,
    pub constraints: ConstraintSet,
    pub details: ScenarioDetails,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScenarioDetails {
    ProbitGp { ell1: usize, ell2: usize },
    ProbitGauss { lambda: Vec<f64>, beta: Vec<f64>, y: Vec<u8> },
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn soft(&self, eta: f64) -> Result<SoftTmvnParams> {
        SoftTmvnParams::new(DVector::zeros(self.dim()), self.sigma.clone(), self.constraints.clone(), eta)
    }

    pub fn hard(&self) -> Result<HardTmvn> {
        HardTmvn::new(DVector::zeros(self.dim()), self.sigma.clone(), self.constraints.clone())
    }

    /// Full instance as JSON, for reproduction elsewhere.
    pub fn to_json(&self) -> Value {
        let sigma = match &self.sigma {
            CovStructure::KernelGram(k) => json!({
                "kind": "kernel_gram",
                "points": k.points(),
                "nu": k.nu(),
                "scale": k.scale(),
                "jitter": k.jitter(),
            }),
            CovStructure::ProbitBlock(p) => json!({
                "kind": "probit_block",
                "h": matrix_rows(p.h()),
                "l": p.l().as_slice(),
            }),
            CovStructure::Diagonal(d) => json!({ "kind": "diagonal", "diag": d.as_slice() }),
            CovStructure::Dense(_) => json!({ "kind": "dense", "matrix": matrix_rows(&self.sigma.to_dense()) }),
        };
        json!({
            "d": self.dim(),
            "sigma": sigma,
            "constraints": self.constraints,
            "details": self.details,
        })
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Instance from the spec's own seed on [`GENERATOR_STREAM`].
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    let mut rng = stream_rng(spec.seed(), GENERATOR_STREAM);
    generate_with(spec, &mut rng)
}

/// Instance drawn from `rng`; the seed field of `spec` is not consulted.
pub fn generate_with<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<Scenario> {
    match *spec {
        ScenarioSpec::ProbitGp { n, nu, scale, .. } => probit_gp_from(n, nu, scale, rng),
        ScenarioSpec::ProbitGauss { n_obs, p, lambda_range, .. } => probit_gauss_from(n_obs, p, lambda_range, rng),
    }
}

/// GP classification posterior on sites `1..=n`: Matern Gram covariance and
/// signs `+` on `[1, l1]`, `-` on `(l1, l2]`, `+` on `(l2, n]` with
/// `l1 ~ U{10..n/2}` and `l2 ~ U{n/2+1..n-10}`.
pub fn gen_probit_gp(n: usize, nu: f64, scale: f64, seed: u64) -> Result<Scenario> {
    probit_gp_from(n, nu, scale, &mut stream_rng(seed, GENERATOR_STREAM))
}

fn probit_gp_from<R: Rng + ?Sized>(n: usize, nu: f64, scale: f64, rng: &mut R) -> Result<Scenario> {
    if n < 21 {
        return Err(Error::InvalidParameter(format!("probit GP scenario needs n >= 21, got {n}")));
    }
    let half = n / 2;
    let ell1 = rng.random_range(10..=half);
    let ell2 = rng.random_range(half + 1..=n - 10);
    let points: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let sigma = CovStructure::kernel_gram(points, nu, scale)?;
    let axes = (0..n).map(|k| {
        let site = k + 1;
        let sign = if site <= ell1 || site > ell2 {
            Sign::Positive
        } else {
            Sign::Negative
        };
        (k, sign)
    });
    Ok(Scenario {
        sigma,
        constraints: ConstraintSet::axis_aligned(n, axes)?,
        details: ScenarioDetails::ProbitGp { ell1, ell2 },
    })
}

/// Probit regression posterior of `theta = (z, beta)` with `x_i ~ N(0, I_P)`,
/// `lambda_j ~ U[1/15, 1/5]`, `beta ~ N(0, Lambda)`, `z ~ N(X beta, I)` and
/// `y_i = 1(z_i >= 0)`. The first `N` coordinates carry the sign of `y`.
pub fn gen_probit_gauss(n_obs: usize, p: usize, seed: u64) -> Result<Scenario> {
    gen_probit_gauss_with(n_obs, p, default_lambda_range(), seed)
}

pub fn gen_probit_gauss_with(n_obs: usize, p: usize, lambda_range: [f64; 2], seed: u64) -> Result<Scenario> {
    probit_gauss_from(n_obs, p, lambda_range, &mut stream_rng(seed, GENERATOR_STREAM))
}

fn probit_gauss_from<R: Rng + ?Sized>(n_obs: usize, p: usize, lambda_range: [f64; 2], rng: &mut R) -> Result<Scenario> {
    if n_obs == 0 || p == 0 {
        return Err(Error::InvalidParameter(format!("probit scenario needs N, P >= 1, got ({n_obs}, {p})")));
    }
    let [lo, hi] = lambda_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda range must lie in (0, inf), got [{lo}, {hi}]")));
    }
    let x = DMatrix::from_fn(n_obs, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let lambda = DVector::from_fn(p, |_, _| if lo < hi { rng.random_range(lo..hi) } else { lo });
    let beta = DVector::from_fn(p, |j, _| lambda[j].sqrt() * rng.sample::<f64, _>(StandardNormal));
    let mean = &x * &beta;
    let y: Vec<u8> = mean
        .iter()
        .map(|m| u8::from(m + rng.sample::<f64, _>(StandardNormal) >= 0.0))
        .collect();
    let axes = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| (i, if yi == 1 { Sign::Positive } else { Sign::Negative }));
    let constraints = ConstraintSet::axis_aligned(n_obs + p, axes)?;
    Ok(Scenario {
        sigma: CovStructure::probit_block(x, lambda.clone())?,
        constraints,
        details: ScenarioDetails::ProbitGauss {
            lambda: lambda.as_slice().to_vec(),
            beta: beta.as_slice().to_vec(),
            y,
        },
    })
}
