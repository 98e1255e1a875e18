//! Sample-comparison metrics and chain diagnostics.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{check_dim, Error, Result};

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical 1-Wasserstein distance between two samples: the mean absolute
/// gap between order statistics. Unequal sizes are truncated to the shorter
/// sample (taking the leading draws) before sorting. Inputs need not be sorted.
pub fn w1_empirical_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len().min(y.len());
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let xs = sorted(&x[..n]);
    let ys = sorted(&y[..n]);
    Ok(xs.iter().zip(&ys).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64)
}

/// Per-coordinate W1 distances between the columns of two `n x d` sample matrices.
pub fn w1_per_coord(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_dim("sample columns", x.ncols(), y.ncols())?;
    if x.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    x.column_iter()
        .zip(y.column_iter())
        .map(|(cx, cy)| w1_empirical_1d(cx.as_slice(), cy.as_slice()))
        .collect()
}

/// `D`: the mean over coordinates of the marginal empirical W1 distances.
pub fn metric_d(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let w = w1_per_coord(x, y)?;
    Ok(w.iter().sum::<f64>() / w.len() as f64)
}

/// `xi`: squared distance between the sample means, divided by `d`.
pub fn metric_xi(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    check_dim("sample columns", x.ncols(), y.ncols())?;
    if x.ncols() == 0 || x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    let diff = x.row_mean() - y.row_mean();
    Ok(diff.norm_squared() / x.ncols() as f64)
}

/// Sample autocovariances at lags `0..n` (biased, divisor `n`), by FFT.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let scale = 1.0 / (m as f64 * n as f64);
    buf[..n].iter().map(|z| z.re * scale).collect()
}

/// Effective sample size with Geyer's initial monotone sequence estimator:
/// `n / tau`, `tau = -1 + 2 sum_m Gamma_m`, where `Gamma_m = rho_{2m} + rho_{2m+1}`
/// is summed while positive and forced nonincreasing. Clipped to `(0, n]`.
pub fn ess(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 10 {
        return Err(Error::InvalidParameter(format!("ESS needs at least 10 draws, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("ESS input contains non-finite values".into()));
    }
    let acov = autocovariance(x);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if acov[0] <= (1e-13 * scale).powi(2) {
        return Err(Error::ConstantSeries);
    }
    let rho = |k: usize| if k < n { acov[k] / acov[0] } else { 0.0 };
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let gamma = rho(2 * m) + rho(2 * m + 1);
        if gamma <= 0.0 {
            break;
        }
        let gamma = gamma.min(prev);
        tau += 2.0 * gamma;
        prev = gamma;
        m += 1;
    }
    let ess = n as f64 / tau.max(f64::MIN_POSITIVE);
    Ok(ess.min(n as f64))
}

/// Monte Carlo standard error of the mean of `x`, using [`ess`].
pub fn mc_standard_error(x: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var / ess(x)?).sqrt())
}
