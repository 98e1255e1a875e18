//! Exact Polya-Gamma `PG(1, c)` draws.
//!
//! Devroye-style alternating-series sampler on the tilted Jacobi density
//! `J*(1, c/2)`, returning `J*/4`. Right of the truncation point the proposal
//! is a truncated exponential, left of it a truncated inverse Gaussian. The
//! per-proposal acceptance probability is bounded below (above 0.99 for every
//! tilt), so the loop terminates quickly in expectation; a hard cap guards
//! against a broken random source.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::special::log_norm_cdf;

const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;
const MAX_PROPOSALS: u64 = 1_000_000;

/// A single `PG(1, tilt)` variate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgDraw {
    pub omega: f64,
    pub tilt: f64,
}

/// `E[PG(1, c)] = tanh(c/2) / (2c)`, with the removable singularity at zero.
pub fn pg1_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-4 {
        // tanh(x)/x = 1 - x^2/3 + 2x^4/15, x = c/2
        let x2 = 0.25 * c * c;
        0.25 * (1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0)
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// `Var[PG(1, c)] = (2 tanh(c/2) - c sech^2(c/2)) / (4 c^3)`, `1/24` at zero.
pub fn pg1_variance(c: f64) -> f64 {
    let c = c.abs();
    if c < 0.2 {
        // Taylor series; the closed form cancels badly near zero.
        let c2 = c * c;
        1.0 / 24.0
            + c2 * (-1.0 / 120.0
                + c2 * (17.0 / 13440.0
                    + c2 * (-31.0 / 181440.0 + c2 * (691.0 / 31933440.0 - c2 * 1835.0 / 697465859.0))))
    } else {
        let sech = 1.0 / (0.5 * c).cosh();
        (2.0 * (0.5 * c).tanh() - c * sech * sech) / (4.0 * c.powi(3))
    }
}

/// Draw `omega ~ PG(1, c)`.
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<f64> {
    if !c.is_finite() {
        return Err(Error::InvalidParameter(format!("Polya-Gamma tilt must be finite, got {c}")));
    }
    let z = 0.5 * c.abs();
    let k = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = exponential_mass(z, k);

    for _ in 0..MAX_PROPOSALS {
        let x = if rng.random::<f64>() < p_exp {
            TRUNC + rng.sample::<f64, _>(Exp1) / k
        } else {
            truncated_inv_gauss(z, rng)
        };

        let mut s = series_term(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_term(n, x);
                if y <= s {
                    return Ok(0.25 * x);
                }
            } else {
                s += series_term(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
    Err(Error::IterationCap(MAX_PROPOSALS))
}

/// Draw `PG(1, c)` and keep the tilt alongside.
pub fn sample_pg_draw<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<PgDraw> {
    Ok(PgDraw {
        omega: sample_pg1(c, rng)?,
        tilt: c,
    })
}

/// Probability of the exponential (right) proposal piece, `p / (p + q)`.
fn exponential_mass(z: f64, k: f64) -> f64 {
    let b = (TRUNC * z - 1.0) / TRUNC.sqrt();
    let a = -(TRUNC * z + 1.0) / TRUNC.sqrt();
    let x0 = k.ln() + k * TRUNC;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Piecewise coefficient of the alternating series for the Jacobi density.
fn series_term(n: u32, x: f64) -> f64 {
    let npk = n as f64 + 0.5;
    let kk = npk * PI;
    if x > TRUNC {
        kk * (-0.5 * kk * kk * x).exp()
    } else if x > 0.0 {
        let expnt = -1.5 * ((0.5 * PI).ln() + x.ln()) + kk.ln() - 2.0 * npk * npk / x;
        expnt.exp()
    } else {
        0.0
    }
}

/// Inverse Gaussian `IG(1/z, 1)` truncated to `(0, TRUNC)`.
fn truncated_inv_gauss<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    if z < TRUNC_RECIP {
        // mean beyond the truncation point: 1/chi^2 proposal, accept by the tilt
        loop {
            let (mut e1, mut e2): (f64, f64) = (rng.sample(Exp1), rng.sample(Exp1));
            while e1 * e1 > 2.0 * e2 / TRUNC {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let x = 1.0 + e1 * TRUNC;
            let x = TRUNC / (x * x);
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let y: f64 = rng.sample(StandardNormal);
            let y = y * y;
            let half_mu = 0.5 * mu;
            let mu_y = mu * y;
            let mut x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < TRUNC && x > 0.0 {
                return x;
            }
        }
    }
}
