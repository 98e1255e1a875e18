//! Exact Gaussian draws for structured covariances.
//!
//! [`sample_posterior`] draws from `N((Phi^T Phi + Sigma^-1)^-1 Phi^T alpha,
//! (Phi^T Phi + Sigma^-1)^-1)` with one prior draw `u ~ N(0, Sigma)` and a
//! single `r x r` SPD solve: `v = Phi u + delta`, `(Phi Sigma Phi^T + I) w =
//! alpha - v`, `theta = u + Sigma Phi^T w`. Apart from the prior draw the work
//! is `O(r^2 d)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::kernel::matern;

/// Covariance `Sigma` in one of the supported structured forms.
///
/// Factorizations are computed once at construction.
#[derive(Debug, Clone)]
pub enum CovStructure {
    Dense(DenseCov),
    Diagonal(DVector<f64>),
    ProbitBlock(ProbitBlockCov),
    KernelGram(KernelGramCov),
}

#[derive(Debug, Clone)]
pub struct DenseCov {
    sigma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
}

/// `[[I_N + H L H^T, H L], [L H^T, L]]` with `L` diagonal.
#[derive(Debug, Clone)]
pub struct ProbitBlockCov {
    h: DMatrix<f64>,
    l: DVector<f64>,
}

/// Matern Gram matrix over 1-D sites, with relative jitter on the diagonal.
#[derive(Debug, Clone)]
pub struct KernelGramCov {
    points: Vec<f64>,
    nu: f64,
    scale: f64,
    jitter: f64,
    inner: DenseCov,
}

/// Relative diagonal jitter applied to kernel Gram matrices.
pub const GRAM_JITTER: f64 = 1e-8;

impl DenseCov {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::InvalidParameter(format!(
                "covariance must be square, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if !(asym <= 1e-10 * sigma.amax().max(1.0)) {
            return Err(Error::InvalidParameter("covariance is not symmetric".into()));
        }
        match Cholesky::new(sigma.clone()) {
            Some(chol) => {
                let lower = chol.l();
                Ok(Self { sigma, chol, lower })
            }
            None => Err(Error::NotPositiveDefinite {
                minor: failing_leading_minor(&sigma),
            }),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }
}

/// 1-based index of the first leading minor whose Cholesky pivot is not positive.
pub fn failing_leading_minor(m: &DMatrix<f64>) -> usize {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return j + 1;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    n
}

impl ProbitBlockCov {
    pub fn new(h: DMatrix<f64>, l: DVector<f64>) -> Result<Self> {
        check_dim("probit block L", h.ncols(), l.len())?;
        if let Some(k) = l.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("L[{k}] must be positive, got {}", l[k])));
        }
        Ok(Self { h, l })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn l(&self) -> &DVector<f64> {
        &self.l
    }

    fn n(&self) -> usize {
        self.h.nrows()
    }

    fn q(&self) -> usize {
        self.h.ncols()
    }
}

impl KernelGramCov {
    pub fn new(points: Vec<f64>, nu: f64, scale: f64) -> Result<Self> {
        let n = points.len();
        let mut k = DMatrix::<f64>::zeros(n, n);
        // regular grids repeat lags; the Bessel route is worth caching
        let mut by_lag = std::collections::HashMap::new();
        for i in 0..n {
            for j in 0..=i {
                let lag = (points[i] - points[j]).abs();
                let v = match by_lag.get(&lag.to_bits()) {
                    Some(&v) => v,
                    None => {
                        let v = matern(lag, nu, scale)?;
                        by_lag.insert(lag.to_bits(), v);
                        v
                    }
                };
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let jitter = GRAM_JITTER * k.diagonal().mean();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        Ok(Self {
            points,
            nu,
            scale,
            jitter,
            inner: DenseCov::new(k)?,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.inner.matrix()
    }
}

impl CovStructure {
    pub fn dense(sigma: DMatrix<f64>) -> Result<Self> {
        DenseCov::new(sigma).map(CovStructure::Dense)
    }

    pub fn diagonal(diag: DVector<f64>) -> Result<Self> {
        if let Some(k) = diag.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NotPositiveDefinite { minor: k + 1 });
        }
        Ok(CovStructure::Diagonal(diag))
    }

    pub fn identity(d: usize) -> Self {
        CovStructure::Diagonal(DVector::from_element(d, 1.0))
    }

    pub fn probit_block(h: DMatrix<f64>, l: DVector<f64>) -> Result<Self> {
        ProbitBlockCov::new(h, l).map(CovStructure::ProbitBlock)
    }

    pub fn kernel_gram(points: Vec<f64>, nu: f64, scale: f64) -> Result<Self> {
        KernelGramCov::new(points, nu, scale).map(CovStructure::KernelGram)
    }

    pub fn dim(&self) -> usize {
        match self {
            CovStructure::Dense(c) => c.sigma.nrows(),
            CovStructure::Diagonal(v) => v.len(),
            CovStructure::ProbitBlock(p) => p.n() + p.q(),
            CovStructure::KernelGram(k) => k.points.len(),
        }
    }

    /// Marginal variances `diag(Sigma)`.
    pub fn diag(&self) -> DVector<f64> {
        match self {
            CovStructure::Dense(c) => c.sigma.diagonal(),
            CovStructure::KernelGram(k) => k.matrix().diagonal(),
            CovStructure::Diagonal(v) => v.clone(),
            CovStructure::ProbitBlock(p) => {
                let mut out = DVector::zeros(p.n() + p.q());
                for i in 0..p.n() {
                    out[i] = 1.0 + (0..p.q()).map(|j| p.h[(i, j)].powi(2) * p.l[j]).sum::<f64>();
                }
                out.rows_mut(p.n(), p.q()).copy_from(&p.l);
                out
            }
        }
    }

    /// Assemble `Sigma` densely. Intended for small instances and oracles.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            CovStructure::Dense(c) => c.sigma.clone(),
            CovStructure::KernelGram(k) => k.matrix().clone(),
            CovStructure::Diagonal(v) => DMatrix::from_diagonal(v),
            CovStructure::ProbitBlock(_) => self.mul_mat(&DMatrix::identity(self.dim(), self.dim())),
        }
    }

    /// `Sigma * m` for a `d x k` matrix `m`.
    pub fn mul_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.dim(), "Sigma * M: row mismatch");
        match self {
            CovStructure::Dense(c) => &c.sigma * m,
            CovStructure::KernelGram(k) => k.matrix() * m,
            CovStructure::Diagonal(v) => {
                let mut out = m.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= v[i];
                }
                out
            }
            CovStructure::ProbitBlock(p) => {
                let (n, q) = (p.n(), p.q());
                let top = m.rows(0, n);
                // T = L (H^T M1 + M2); Sigma M = [M1 + H T; T]
                let mut t = p.h.tr_mul(&top) + m.rows(n, q);
                for (j, mut row) in t.row_iter_mut().enumerate() {
                    row *= p.l[j];
                }
                let mut out = DMatrix::zeros(n + q, m.ncols());
                out.rows_mut(0, n).copy_from(&(&top + &p.h * &t));
                out.rows_mut(n, q).copy_from(&t);
                out
            }
        }
    }

    /// `Sigma * v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim(), "Sigma * v: length mismatch");
        match self {
            CovStructure::Dense(c) => &c.sigma * v,
            CovStructure::KernelGram(k) => k.matrix() * v,
            CovStructure::Diagonal(d) => d.component_mul(v),
            CovStructure::ProbitBlock(p) => {
                let (n, q) = (p.n(), p.q());
                let top = v.rows(0, n);
                let t = (p.h.tr_mul(&top) + v.rows(n, q)).component_mul(&p.l);
                let mut out = DVector::zeros(n + q);
                out.rows_mut(0, n).copy_from(&(&top + &p.h * &t));
                out.rows_mut(n, q).copy_from(&t);
                out
            }
        }
    }

    /// `Sigma^-1 * v`. The probit block uses its closed-form precision
    /// `[[I, -H], [-H^T, L^-1 + H^T H]]`.
    pub fn precision_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim(), "Sigma^-1 * v: length mismatch");
        match self {
            CovStructure::Dense(c) => c.chol.solve(v),
            CovStructure::KernelGram(k) => k.inner.chol.solve(v),
            CovStructure::Diagonal(d) => v.component_div(d),
            CovStructure::ProbitBlock(p) => {
                let (n, q) = (p.n(), p.q());
                let v1 = v.rows(0, n);
                let v2 = v.rows(n, q);
                let resid = &v1 - &p.h * &v2;
                let mut out = DVector::zeros(n + q);
                out.rows_mut(n, q)
                    .copy_from(&(v2.component_div(&p.l) - p.h.tr_mul(&resid)));
                out.rows_mut(0, n).copy_from(&resid);
                out
            }
        }
    }

    /// Dense `Sigma^-1`; small instances only.
    pub fn precision_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            out.set_column(j, &self.precision_mul(&e));
        }
        out
    }

    /// Exact draw `u ~ N(0, Sigma)`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            CovStructure::Dense(c) => &c.lower * std_normal_vec(c.sigma.nrows(), rng),
            CovStructure::KernelGram(k) => &k.inner.lower * std_normal_vec(k.points.len(), rng),
            CovStructure::Diagonal(d) => {
                DVector::from_iterator(d.len(), d.iter().map(|&s2| s2.sqrt() * rng.sample::<f64, _>(StandardNormal)))
            }
            CovStructure::ProbitBlock(p) => {
                let (n, q) = (p.n(), p.q());
                let mut u = DVector::zeros(n + q);
                for i in 0..n {
                    u[i] = rng.sample(StandardNormal);
                }
                for j in 0..q {
                    let z: f64 = rng.sample(StandardNormal);
                    u[n + j] = p.l[j].sqrt() * z;
                }
                let hu2 = &p.h * u.rows(n, q);
                let mut top = u.rows_mut(0, n);
                top += hu2;
                u
            }
        }
    }
}

pub(crate) fn std_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn check_phi(phi: &DMatrix<f64>, cov: &CovStructure) -> Result<()> {
    check_dim("Phi columns", cov.dim(), phi.ncols())
}

fn spd_factor(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let minor_src = m.clone();
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite {
        minor: failing_leading_minor(&minor_src),
    })
}

/// Draw from `N((Phi^T Phi + Sigma^-1)^-1 Phi^T alpha, (Phi^T Phi + Sigma^-1)^-1)`.
pub fn sample_posterior<R: Rng + ?Sized>(
    phi: &DMatrix<f64>,
    alpha: &DVector<f64>,
    cov: &CovStructure,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_phi(phi, cov)?;
    check_dim("alpha", phi.nrows(), alpha.len())?;
    let u = cov.sample_prior(rng);
    posterior_from_prior_draw(phi, alpha, cov, u, rng)
}

/// Steps after the prior draw: `v = Phi u + delta`, solve, shift.
pub fn posterior_from_prior_draw<R: Rng + ?Sized>(
    phi: &DMatrix<f64>,
    alpha: &DVector<f64>,
    cov: &CovStructure,
    u: DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let r = phi.nrows();
    let delta = std_normal_vec(r, rng);
    let v = phi * &u + delta;
    let sigma_phi_t = cov.mul_mat(&phi.transpose());
    let mut m = phi * &sigma_phi_t;
    for i in 0..r {
        m[(i, i)] += 1.0;
    }
    let w = spd_factor(m)?.solve(&(alpha - v));
    Ok(u + sigma_phi_t * w)
}

/// `mu - Sigma Phi^T (Phi Sigma Phi^T + I)^-1 Phi mu`, which equals
/// `(Phi^T Phi + Sigma^-1)^-1 Sigma^-1 mu`.
pub fn mean_shift(phi: &DMatrix<f64>, cov: &CovStructure, mu: &DVector<f64>) -> Result<DVector<f64>> {
    check_phi(phi, cov)?;
    check_dim("mu", cov.dim(), mu.len())?;
    let sigma_phi_t = cov.mul_mat(&phi.transpose());
    let mut m = phi * &sigma_phi_t;
    for i in 0..phi.nrows() {
        m[(i, i)] += 1.0;
    }
    let w = spd_factor(m)?.solve(&(phi * mu));
    Ok(mu - sigma_phi_t * w)
}

/// `Sigma - Sigma Phi^T (Phi Sigma Phi^T + I)^-1 Phi Sigma`, assembled densely.
pub fn posterior_covariance(phi: &DMatrix<f64>, cov: &CovStructure) -> Result<DMatrix<f64>> {
    check_phi(phi, cov)?;
    let sigma_phi_t = cov.mul_mat(&phi.transpose());
    let mut m = phi * &sigma_phi_t;
    for i in 0..phi.nrows() {
        m[(i, i)] += 1.0;
    }
    let solved = spd_factor(m)?.solve(&sigma_phi_t.transpose());
    Ok(cov.to_dense() - &sigma_phi_t * solved)
}

/// Posterior sampler for a fixed row matrix `W` rescaled per draw by a
/// diagonal weight: `Phi = diag(s) W`.
///
/// `Sigma W^T` and `W Sigma W^T` are cached, so each draw costs
/// `O(r^3 + r d)` plus the prior draw.
#[derive(Debug, Clone)]
pub struct ScaledRowsPosterior {
    w: DMatrix<f64>,
    sigma_wt: DMatrix<f64>,
    w_sigma_wt: DMatrix<f64>,
}

impl ScaledRowsPosterior {
    pub fn new(w: DMatrix<f64>, cov: &CovStructure) -> Result<Self> {
        check_dim("W columns", cov.dim(), w.ncols())?;
        let sigma_wt = cov.mul_mat(&w.transpose());
        let w_sigma_wt = &w * &sigma_wt;
        Ok(Self { w, sigma_wt, w_sigma_wt })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Draw `theta = mu_bar + theta_bar` where `Phi = diag(scale) W`,
    /// `theta_bar` targets `alpha`, and `mu_bar` is the mean shift of `mu`.
    /// Both pieces share one factorization and one solve:
    /// `theta = mu + u + Sigma Phi^T (Phi Sigma Phi^T + I)^-1 (alpha - Phi (mu + u) - delta)`.
    pub fn sample_shifted<R: Rng + ?Sized>(
        &self,
        scale: &DVector<f64>,
        alpha: &DVector<f64>,
        mu: &DVector<f64>,
        cov: &CovStructure,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let u = cov.sample_prior(rng);
        self.shifted_from_prior_draw(scale, alpha, mu, u, rng)
    }

    pub(crate) fn shifted_from_prior_draw<R: Rng + ?Sized>(
        &self,
        scale: &DVector<f64>,
        alpha: &DVector<f64>,
        mu: &DVector<f64>,
        u: DVector<f64>,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let r = self.w.nrows();
        check_dim("row scale", r, scale.len())?;
        check_dim("alpha", r, alpha.len())?;
        if r == 0 {
            return Ok(mu + u);
        }
        let delta = std_normal_vec(r, rng);
        let mut m = self.w_sigma_wt.clone();
        for i in 0..r {
            for j in 0..r {
                m[(i, j)] *= scale[i] * scale[j];
            }
            m[(i, i)] += 1.0;
        }
        let centered = mu + &u;
        let rhs = alpha - (&self.w * &centered).component_mul(scale) - delta;
        let w = spd_factor(m)?.solve(&rhs);
        Ok(centered + &self.sigma_wt * w.component_mul(scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = random_matrix(d, d, rng);
        &a * a.transpose() + DMatrix::identity(d, d) * 0.5
    }

    #[test]
    fn non_spd_reports_leading_minor() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 1.0]);
        match CovStructure::dense(m) {
            Err(Error::NotPositiveDefinite { minor }) => assert_eq!(minor, 3),
            other => panic!("unexpected {other:?}"),
        }
        let d = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            CovStructure::diagonal(d),
            Err(Error::NotPositiveDefinite { minor: 2 })
        ));
        let bad_l = ProbitBlockCov::new(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, -1.0]));
        assert!(bad_l.is_err());
    }

    #[test]
    fn probit_block_operators_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_matrix(4, 3, &mut rng);
        let l = DVector::from_vec(vec![0.5, 1.5, 0.2]);
        let cov = CovStructure::probit_block(h.clone(), l.clone()).unwrap();
        let mut dense = DMatrix::zeros(7, 7);
        let hl = &h * DMatrix::from_diagonal(&l);
        dense.view_mut((0, 0), (4, 4)).copy_from(&(DMatrix::identity(4, 4) + &hl * h.transpose()));
        dense.view_mut((0, 4), (4, 3)).copy_from(&hl);
        dense.view_mut((4, 0), (3, 4)).copy_from(&hl.transpose());
        dense.view_mut((4, 4), (3, 3)).copy_from(&DMatrix::from_diagonal(&l));
        assert!((cov.to_dense() - &dense).amax() < 1e-12);
        assert!((cov.diag() - dense.diagonal()).amax() < 1e-12);

        let v = DVector::from_fn(7, |i, _| i as f64 - 2.5);
        assert!((cov.mul_vec(&v) - &dense * &v).amax() < 1e-12);
        let inv = dense.clone().try_inverse().unwrap();
        assert!((cov.precision_mul(&v) - &inv * &v).amax() < 1e-9);
    }

    #[test]
    fn mean_shift_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cov = CovStructure::dense(random_spd(4, &mut rng)).unwrap();
        let phi = random_matrix(2, 4, &mut rng);
        let zero = DVector::zeros(4);
        assert_eq!(mean_shift(&phi, &cov, &zero).unwrap(), zero);
        let mu = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.1]);
        let shifted = mean_shift(&DMatrix::zeros(2, 4), &cov, &mu).unwrap();
        assert!((shifted - &mu).amax() < 1e-15);
    }

    #[test]
    fn mean_shift_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = random_spd(4, &mut rng);
        let cov = CovStructure::dense(sigma.clone()).unwrap();
        let phi = random_matrix(2, 4, &mut rng);
        let mu = DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0]);
        let sigma_inv = sigma.try_inverse().unwrap();
        let post = (phi.transpose() * &phi + &sigma_inv).try_inverse().unwrap();
        let oracle = &post * &sigma_inv * &mu;
        let got = mean_shift(&phi, &cov, &mu).unwrap();
        assert!((&got - &oracle).norm() / oracle.norm() < 1e-10);
    }

    #[test]
    fn dimension_checks() {
        let cov = CovStructure::identity(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let phi = DMatrix::zeros(1, 2);
        assert!(sample_posterior(&phi, &DVector::zeros(1), &cov, &mut rng).is_err());
        let phi = DMatrix::zeros(1, 3);
        assert!(sample_posterior(&phi, &DVector::zeros(2), &cov, &mut rng).is_err());
        assert!(mean_shift(&phi, &cov, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn shifted_sampler_matches_two_step_route() {
        // theta = mean_shift(mu) + theta_bar with the same randomness
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cov = CovStructure::dense(random_spd(5, &mut rng)).unwrap();
        let w = random_matrix(3, 5, &mut rng);
        let scale = DVector::from_vec(vec![0.3, 1.2, 0.7]);
        let alpha = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let mu = DVector::from_vec(vec![0.1, 0.2, -0.3, 0.4, 0.0]);
        let phi = DMatrix::from_diagonal(&scale) * &w;
        let post = ScaledRowsPosterior::new(w, &cov).unwrap();

        let mut r1 = ChaCha8Rng::seed_from_u64(77);
        let mut r2 = r1.clone();
        let combined = post.sample_shifted(&scale, &alpha, &mu, &cov, &mut r1).unwrap();
        let two_step = mean_shift(&phi, &cov, &mu).unwrap() + sample_posterior(&phi, &alpha, &cov, &mut r2).unwrap();
        assert!((combined - two_step).amax() < 1e-10);
    }

    #[test]
    fn kernel_gram_is_spd_with_jitter() {
        let pts: Vec<f64> = (1..=60).map(|i| i as f64).collect();
        let cov = CovStructure::kernel_gram(pts, 2.5, 1.0).unwrap();
        if let CovStructure::KernelGram(k) = &cov {
            assert!((k.jitter() - GRAM_JITTER).abs() < 1e-20);
            assert!((k.matrix()[(0, 0)] - 1.0 - GRAM_JITTER).abs() < 1e-15);
        }
        assert_eq!(cov.dim(), 60);
    }
}
