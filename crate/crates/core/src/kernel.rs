//! Matern correlation function.

use crate::error::{Error, Result};
use crate::special::{bessel_k, gamma_fn};

/// Matern correlation at distance `r` with smoothness `nu` and length scale
/// `scale`:
///
/// `k(r) = 2^(1-nu) / Gamma(nu) * (sqrt(2 nu) r / scale)^nu * K_nu(sqrt(2 nu) r / scale)`.
///
/// `nu` in `{1/2, 3/2, 5/2}` use the closed forms; other values go through
/// the modified Bessel function.
pub fn matern(r: f64, nu: f64, scale: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!("Matern smoothness must be positive, got {nu}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!("Matern scale must be positive, got {scale}")));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be nonnegative, got {r}")));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let x = (2.0 * nu).sqrt() * r / scale;
    let v = if nu == 0.5 {
        (-x).exp()
    } else if nu == 1.5 {
        (1.0 + x) * (-x).exp()
    } else if nu == 2.5 {
        (1.0 + x + x * x / 3.0) * (-x).exp()
    } else if x > 700.0 {
        0.0
    } else {
        let log_v = (1.0 - nu) * std::f64::consts::LN_2 - gamma_fn(nu).ln() + nu * x.ln() + bessel_k(nu, x).ln();
        log_v.exp()
    };
    Ok(v.min(1.0))
}
