//! Scalar special functions used by the samplers.

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function `1 - Phi(x)`, accurate in the right tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

pub fn norm_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Mills ratio `(1 - Phi(t)) / phi(t)` for large positive `t` by Laplace's
/// continued fraction.
fn mills_ratio(t: f64) -> f64 {
    let mut acc = t;
    // 16 terms reach full double precision for t >= 10
    for k in (1..=16).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `log Phi(x)`, finite for all finite `x`.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -10.0 {
        norm_cdf(x).ln()
    } else {
        norm_log_pdf(x) + mills_ratio(-x).ln()
    }
}

/// Inverse standard normal CDF.
pub fn norm_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// Modified Bessel function of the second kind `K_nu(x)` for `x > 0`, from
/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`. The integrand is
/// analytic and decays doubly exponentially, so the trapezoid rule converges
/// geometrically in the step size.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    // exp(-x cosh t) cosh(nu t) < 1e-300 * K scale beyond this point.
    let t_max = ((745.0 + nu * 50.0) / x + 1.0).acosh() + 1.0;
    let h = 0.01_f64.min(t_max / 200.0);
    let n = (t_max / h).ceil() as usize;
    let mut sum = 0.5 * (-x).exp();
    for k in 1..=n {
        let t = k as f64 * h;
        let v = (-x * t.cosh() + nu * t).exp() * 0.5 + (-x * t.cosh() - nu * t).exp() * 0.5;
        sum += v;
    }
    sum * h
}

pub fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}
