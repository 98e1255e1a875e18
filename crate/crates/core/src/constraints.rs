//! Signed homogeneous linear constraints `s_i * (a_i . theta) >= 0` and the
//! hard/soft indicator machinery shared by every sampler.
//!
//! Rows are stored with an explicit sign instead of folding `-1` into `a_i`.
//! Rows are not normalized: the sharpness of the soft indicator for row `i`
//! is effectively `eta * |a_i|`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::structured::CovStructure;

/// Sign of a single inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sign::Positive),
            -1 => Ok(Sign::Negative),
            other => Err(format!("sign must be +1 or -1, got {other}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRow {
    pub sign: Sign,
    pub a: Vec<f64>,
}

impl ConstraintRow {
    /// `s * a^T theta`; nonnegative iff the row is satisfied.
    pub fn signed_value(&self, theta: &DVector<f64>) -> f64 {
        self.sign.value() * self.a.iter().zip(theta.iter()).map(|(a, t)| a * t).sum::<f64>()
    }

    /// Index `k` if `a = e_k`.
    pub fn axis(&self) -> Option<usize> {
        let mut found = None;
        for (k, &v) in self.a.iter().enumerate() {
            if v == 1.0 && found.is_none() {
                found = Some(k);
            } else if v != 0.0 {
                return None;
            }
        }
        found
    }
}

/// `r <= d` signed linear constraints over `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSet {
    d: usize,
    rows: Vec<ConstraintRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraintSet {
    d: usize,
    rows: Vec<ConstraintRow>,
}

impl<'de> Deserialize<'de> for ConstraintSet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawConstraintSet::deserialize(de)?;
        ConstraintSet::new(raw.d, raw.rows).map_err(serde::de::Error::custom)
    }
}

impl ConstraintSet {
    pub fn new(d: usize, rows: Vec<ConstraintRow>) -> Result<Self> {
        if rows.len() > d {
            return Err(Error::TooManyConstraints { r: rows.len(), d });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.a.len() != d {
                return Err(Error::InvalidConstraint {
                    row: i,
                    reason: format!("a has length {}, expected {d}", row.a.len()),
                });
            }
            if row.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConstraint {
                    row: i,
                    reason: "a has non-finite entries".into(),
                });
            }
            if row.a.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidConstraint {
                    row: i,
                    reason: "a has zero norm".into(),
                });
            }
        }
        Ok(Self { d, rows })
    }

    /// No constraints: `C = R^d`.
    pub fn unconstrained(d: usize) -> Self {
        Self { d, rows: Vec::new() }
    }

    /// Axis-aligned constraints `s_k * theta_k >= 0` for the given `(k, sign)` pairs.
    pub fn axis_aligned(d: usize, axes: impl IntoIterator<Item = (usize, Sign)>) -> Result<Self> {
        let rows = axes
            .into_iter()
            .map(|(k, sign)| {
                if k >= d {
                    return Err(Error::InvalidParameter(format!("axis {k} out of range for d = {d}")));
                }
                let mut a = vec![0.0; d];
                a[k] = 1.0;
                Ok(ConstraintRow { sign, a })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, rows)
    }

    /// Positive orthant on the first `r` coordinates.
    pub fn orthant(d: usize, r: usize) -> Result<Self> {
        Self::axis_aligned(d, (0..r).map(|k| (k, Sign::Positive)))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    /// For every row, `Some(axis)` when all rows are unit coordinate vectors.
    pub fn axes(&self) -> Option<Vec<(usize, Sign)>> {
        self.rows.iter().map(|r| r.axis().map(|k| (k, r.sign))).collect()
    }

    /// True iff `s_i a_i^T theta >= 0` for every row. An empty set accepts everything.
    pub fn hard_indicator(&self, theta: &DVector<f64>) -> Result<bool> {
        check_dim("theta", self.d, theta.len())?;
        Ok(self.rows.iter().all(|row| row.signed_value(theta) >= 0.0))
    }

    /// `sum_i log sigmoid_eta(s_i a_i^T theta)`.
    pub fn log_soft_indicator(&self, theta: &DVector<f64>, eta: f64) -> Result<f64> {
        check_dim("theta", self.d, theta.len())?;
        Ok(self
            .rows
            .iter()
            .map(|row| log_sigmoid(eta * row.signed_value(theta)))
            .sum())
    }
}

/// Parameters of the soft tMVN target: `N(mu, Sigma)` times the product of
/// sigmoid-smoothed constraint indicators with sharpness `eta`.
#[derive(Debug, Clone)]
pub struct SoftTmvnParams {
    pub mu: DVector<f64>,
    pub sigma: CovStructure,
    pub constraints: ConstraintSet,
    pub eta: f64,
}

impl SoftTmvnParams {
    pub fn new(mu: DVector<f64>, sigma: CovStructure, constraints: ConstraintSet, eta: f64) -> Result<Self> {
        check_dim("mu", sigma.dim(), mu.len())?;
        check_dim("constraint dimension", sigma.dim(), constraints.dim())?;
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mu has non-finite entries".into()));
        }
        Ok(Self {
            mu,
            sigma,
            constraints,
            eta,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Scaled logistic sigmoid `1 / (1 + exp(-eta x))`.
pub fn sigmoid_eta(x: f64, eta: f64) -> f64 {
    sigmoid(eta * x)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 / (1 + exp(-z)))` without overflow.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn sigmoid_symmetry_point_and_reflection() {
        assert_eq!(sigmoid_eta(0.0, 100.0), 0.5);
        for &x in &[-3.0, -0.2, 0.01, 1.5] {
            for &eta in &[1.0, 10.0, 500.0] {
                let s = sigmoid_eta(x, eta) + sigmoid_eta(-x, eta);
                assert!((s - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sigmoid_step_bound() {
        for &x in &[-1.0, -0.01, 0.01, 1.0] {
            for &eta in &[10.0, 100.0] {
                let err = (sigmoid_eta(x, eta) - step(x)).abs();
                assert!(err <= 1.0 / (1.0 + (eta * f64::abs(x)).exp()) + 1e-15);
            }
        }
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        for &z in &[-800.0, -700.0, 700.0, 800.0] {
            let v = sigmoid_eta(z, 1.0);
            assert!(v.is_finite() && (0.0..=1.0).contains(&v));
            assert!(log_sigmoid(z).is_finite());
        }
        assert_eq!(sigmoid_eta(800.0, 1.0), 1.0);
        assert_eq!(sigmoid_eta(-800.0, 1.0), 0.0);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
    }

    #[test]
    fn hard_indicator_orthant() {
        let c = ConstraintSet::orthant(2, 2).unwrap();
        assert!(c.hard_indicator(&DVector::from_vec(vec![1.0, 1.0])).unwrap());
        assert!(!c.hard_indicator(&DVector::from_vec(vec![1.0, -0.001])).unwrap());
        let empty = ConstraintSet::unconstrained(3);
        assert!(empty.hard_indicator(&DVector::from_vec(vec![-1.0, -2.0, 4.0])).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = ConstraintSet::orthant(2, 2).unwrap();
        assert!(matches!(
            c.hard_indicator(&DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(c.log_soft_indicator(&DVector::zeros(1), 1.0).is_err());
    }

    #[test]
    fn construction_validates_rows() {
        let zero = ConstraintRow { sign: Sign::Positive, a: vec![0.0, 0.0] };
        assert!(matches!(
            ConstraintSet::new(2, vec![zero]),
            Err(Error::InvalidConstraint { row: 0, .. })
        ));
        let short = ConstraintRow { sign: Sign::Positive, a: vec![1.0] };
        assert!(ConstraintSet::new(2, vec![short]).is_err());
        let rows = (0..3)
            .map(|_| ConstraintRow { sign: Sign::Negative, a: vec![1.0, 1.0] })
            .collect();
        assert!(matches!(
            ConstraintSet::new(2, rows),
            Err(Error::TooManyConstraints { r: 3, d: 2 })
        ));
    }

    #[test]
    fn log_soft_indicator_values() {
        let c = ConstraintSet::orthant(3, 1).unwrap();
        let v = c.log_soft_indicator(&DVector::zeros(3), 37.0).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-15);

        // 2 * log(sigmoid(10)) = -2 * log1p(exp(-10))
        let c = ConstraintSet::orthant(2, 2).unwrap();
        let v = c
            .log_soft_indicator(&DVector::from_vec(vec![0.1, 0.1]), 100.0)
            .unwrap();
        let expected = -2.0 * (-10.0f64).exp().ln_1p();
        assert!((v - expected).abs() < 1e-18);
        assert!((v + 9.0799e-5).abs() < 1e-8);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let json = r#"{"d": 2, "rows": [{"sign": 1, "a": [1.0, 0.0]}, {"sign": -1, "a": [0.5, 0.5]}]}"#;
        let c: ConstraintSet = serde_json::from_str(json).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.rows()[1].sign, Sign::Negative);
        let back: ConstraintSet = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);

        assert!(serde_json::from_str::<ConstraintSet>(r#"{"d": 1, "rows": [{"sign": 2, "a": [1.0]}]}"#).is_err());
        assert!(serde_json::from_str::<ConstraintSet>(r#"{"d": 1, "rows": [], "extra": 0}"#).is_err());
    }

    #[test]
    fn axis_detection() {
        let c = ConstraintSet::orthant(3, 2).unwrap();
        assert_eq!(c.axes().unwrap(), vec![(0, Sign::Positive), (1, Sign::Positive)]);
        let general = ConstraintSet::new(
            2,
            vec![ConstraintRow { sign: Sign::Positive, a: vec![1.0, 1.0] }],
        )
        .unwrap();
        assert!(general.axes().is_none());
    }

    fn instance() -> impl Strategy<Value = (ConstraintSet, Vec<f64>, f64)> {
        (1usize..5).prop_flat_map(|d| {
            let rows = prop::collection::vec(
                (any::<bool>(), prop::collection::vec(0.1f64..2.0, d), prop::collection::vec(any::<bool>(), d)),
                0..=d,
            );
            (rows, prop::collection::vec(-1.0f64..1.0, d), 0.5f64..50.0).prop_map(move |(rows, theta, eta)| {
                let rows = rows
                    .into_iter()
                    .map(|(pos, mag, neg)| ConstraintRow {
                        sign: if pos { Sign::Positive } else { Sign::Negative },
                        a: mag.iter().zip(&neg).map(|(m, &n)| if n { -m } else { *m }).collect(),
                    })
                    .collect();
                (ConstraintSet::new(d, rows).unwrap(), theta, eta)
            })
        })
    }

    proptest! {
        #[test]
        fn soft_indicator_is_a_probability_product((c, theta, eta) in instance()) {
            let theta = DVector::from_vec(theta);
            let log_v = c.log_soft_indicator(&theta, eta).unwrap();
            prop_assert!(log_v <= 0.0);
            let product: f64 = c.rows().iter().map(|r| sigmoid_eta(r.signed_value(&theta), eta)).product();
            let v = log_v.exp();
            prop_assert!(v > 0.0 && v <= 1.0);
            prop_assert!((v - product).abs() <= 1e-12 * product.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn indicators_ignore_row_order((c, theta, eta) in instance()) {
            let theta = DVector::from_vec(theta);
            let mut rows = c.rows().to_vec();
            rows.reverse();
            let rev = ConstraintSet::new(c.dim(), rows).unwrap();
            prop_assert_eq!(c.hard_indicator(&theta).unwrap(), rev.hard_indicator(&theta).unwrap());
            let a = c.log_soft_indicator(&theta, eta).unwrap();
            let b = rev.log_soft_indicator(&theta, eta).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn soft_converges_to_hard_away_from_boundary((c, theta, eta) in instance(), scale in 1.0f64..20.0) {
            let theta = DVector::from_vec(theta);
            let delta = c.rows().iter().map(|r| r.signed_value(&theta).abs()).fold(f64::INFINITY, f64::min);
            prop_assume!(delta > 1e-3);
            let eta = eta * scale;
            let soft = c.log_soft_indicator(&theta, eta).unwrap().exp();
            let hard = if c.hard_indicator(&theta).unwrap() { 1.0 } else { 0.0 };
            let bound = c.len() as f64 / (1.0 + (eta * delta).exp());
            prop_assert!((soft - hard).abs() <= bound + 1e-15);
        }

        #[test]
        fn soft_indicator_increases_with_margin(theta0 in -1.0f64..1.0, step in 0.001f64..0.5, eta in 1.0f64..100.0) {
            let c = ConstraintSet::orthant(2, 1).unwrap();
            let a = c.log_soft_indicator(&DVector::from_vec(vec![theta0, 0.3]), eta).unwrap();
            let b = c.log_soft_indicator(&DVector::from_vec(vec![theta0 + step, 0.3]), eta).unwrap();
            prop_assert!(b >= a);
            if eta * (theta0 + step) < 30.0 {
                prop_assert!(b > a);
            }
        }
    }
}
