mod common;

use common::{ks_critical, ks_one_sample, ks_one_sample_critical, ks_two_sample, mean, variance};
use nalgebra::{DMatrix, DVector};
use soft_tmvn::diagnostics::mc_standard_error;
use soft_tmvn::reference::{
    gibbs_tmvn, quadrature_moments, rejection_batch, sample_trunc_norm_1d, HardTmvn, QuadTarget, QuadratureGrid,
};
use soft_tmvn::rng::stream_rng;
use soft_tmvn::special::norm_cdf;
use soft_tmvn::{ChainSpec, ConstraintSet, CovStructure, Sign};

fn orthant_target(rho: f64) -> HardTmvn {
    HardTmvn::new(
        DVector::zeros(2),
        CovStructure::dense(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap(),
        ConstraintSet::orthant(2, 2).unwrap(),
    )
    .unwrap()
}

#[test]
fn untruncated_1d_draws_are_standard_normal() {
    let mut rng = stream_rng(1, 0);
    let x: Vec<f64> = (0..100_000)
        .map(|_| sample_trunc_norm_1d(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, &mut rng).unwrap())
        .collect();
    assert!(ks_one_sample(&x, norm_cdf) < ks_one_sample_critical(x.len(), 0.001));
}

#[test]
fn half_normal_mean() {
    let mut rng = stream_rng(2, 0);
    let x: Vec<f64> = (0..100_000)
        .map(|_| sample_trunc_norm_1d(0.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap())
        .collect();
    assert!(x.iter().all(|&v| v >= 0.0));
    let se = (variance(&x) / x.len() as f64).sqrt();
    assert!((mean(&x) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 3.0 * se);
}

#[test]
fn coordinatewise_gibbs_matches_hard_quadrature() {
    let target = orthant_target(0.5);
    let q = quadrature_moments(
        QuadTarget::Hard(&target),
        &QuadratureGrid::for_target(QuadTarget::Hard(&target)).unwrap(),
    )
    .unwrap();
    let batch = gibbs_tmvn(&target, &ChainSpec::new(1000, 5, 50_000, 3)).unwrap();
    assert!((0..batch.n_samples()).all(|i| target.constraints.hard_indicator(&batch.row(i)).unwrap()));
    for j in 0..2 {
        let x = batch.column(j);
        let se = mc_standard_error(&x).unwrap();
        assert!((mean(&x) - q.mean[j]).abs() < 4.0 * se, "coordinate {j}");
        let sq: Vec<f64> = x.iter().map(|v| (v - q.mean[j]).powi(2)).collect();
        assert!((mean(&sq) - q.cov[(j, j)]).abs() < 4.0 * mc_standard_error(&sq).unwrap());
    }
}

#[test]
fn gibbs_and_rejection_agree_in_distribution() {
    let target = HardTmvn::new(
        DVector::from_vec(vec![0.3, -0.2, 0.1]),
        CovStructure::dense(DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.2, 0.4, 1.0, -0.3, 0.2, -0.3, 1.0])).unwrap(),
        ConstraintSet::axis_aligned(3, [(0, Sign::Positive), (2, Sign::Negative)]).unwrap(),
    )
    .unwrap();
    let n = 100_000;
    let gibbs = gibbs_tmvn(&target, &ChainSpec::new(1000, 10, n, 5)).unwrap();
    let (rejection, _) = rejection_batch(&target, n, 6, 1000).unwrap();
    for j in 0..3 {
        let d = ks_two_sample(&gibbs.column(j), &rejection.column(j));
        assert!(d < ks_critical(n, n, 0.001), "coordinate {j}: KS {d}");
    }
}

#[test]
fn rejection_accepts_one_third_on_the_correlated_orthant() {
    let target = orthant_target(0.5);
    let (_, tries) = rejection_batch(&target, 33_000, 7, 1000).unwrap();
    let rate = 33_000.0 / tries as f64;
    let p = 1.0 / 3.0;
    let se = (p * (1.0 - p) / tries as f64).sqrt();
    assert!((rate - p).abs() < 3.0 * se, "rate {rate}");
}
