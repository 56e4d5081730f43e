//! Probability-simplex and logit primitives: softmax, sigmoid, temperature scaling.

use crate::error::{CalibError, Result};
use serde::{Deserialize, Serialize};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before any logarithm or division.
pub const EPS: f64 = 1e-12;

/// Tolerance on the sum of a probability vector accepted at construction.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

/// Logistic sigmoid, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds `ln(p / (1 - p))` of a clamped probability.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = clamp_prob(p);
    p.ln() - (-p).ln_1p()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A finite vector of class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(CalibError::Ingestion("empty logit vector".into()));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(CalibError::Ingestion(format!(
                "logit {i} is not finite ({})",
                scores[i]
            )));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// A point on the probability simplex (n >= 2).
///
/// Entries are stored as given; consumers that take logarithms use
/// [`ProbVector::clamped`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates entries in `[0, 1]` and a sum of one within [`SIMPLEX_TOL`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(CalibError::Domain(format!(
                "probability vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(CalibError::Domain(format!(
                    "probability {i} = {v} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(CalibError::Domain(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self(values))
    }

    /// Wraps values the caller has already normalized.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!(values.len() >= 2);
        Self(values)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Entries clamped to `[EPS, 1 - EPS]`.
    pub fn clamped(&self) -> Vec<f64> {
        self.0.iter().map(|&p| clamp_prob(p)).collect()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Top-label confidence.
    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

/// A strictly positive temperature.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(CalibError::Parameter(format!(
                "temperature must be positive and finite, got {t}"
            )));
        }
        Ok(Self(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = CalibError;

    fn try_from(t: f64) -> Result<Self> {
        Temperature::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// Writes `softmax(scores / temperature)` into `out`.
///
/// Shared by every code path that turns logits into probabilities so that
/// fitting, application and evaluation agree bit for bit.
pub(crate) fn tempered_softmax_into(scores: &[f64], temperature: f64, out: &mut [f64]) {
    debug_assert_eq!(scores.len(), out.len());
    let inv_t = 1.0 / temperature;
    let mut max = f64::NEG_INFINITY;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = s * inv_t;
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(logits: &LogitVector) -> Result<ProbVector> {
    temperature_scale(logits, Temperature::ONE)
}

/// `softmax(logits / T)`.
pub fn temperature_scale(logits: &LogitVector, t: Temperature) -> Result<ProbVector> {
    if logits.len() < 2 {
        return Err(CalibError::Domain(
            "softmax needs at least 2 logits".into(),
        ));
    }
    let mut out = vec![0.0; logits.len()];
    tempered_softmax_into(logits.as_slice(), t.value(), &mut out);
    Ok(ProbVector::from_normalized(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax(&lv(&[0.0, 0.0, 0.0])).unwrap();
        for &x in p.as_slice() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&lv(&[4f64.ln(), 0.0])).unwrap();
        assert_abs_diff_eq!(p.get(0), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn softmax_large_gap_does_not_overflow() {
        let p = softmax(&lv(&[100.0, 0.0])).unwrap();
        assert!(p.as_slice().iter().all(|x| x.is_finite()));
        assert!(p.get(0) > 1.0 - 1e-12);
        assert!(p.get(1) < 1e-40);
        let c = p.clamped();
        assert_eq!(c[0], 1.0 - EPS);
        assert_eq!(c[1], EPS);
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(matches!(
            LogitVector::new(vec![0.0, f64::NAN]),
            Err(CalibError::Ingestion(_))
        ));
        assert!(LogitVector::new(vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn temperature_examples() {
        let p = temperature_scale(&lv(&[4f64.ln(), 0.0]), Temperature::ONE).unwrap();
        assert_abs_diff_eq!(p.get(0), 0.8, epsilon = 1e-15);

        let hot = temperature_scale(&lv(&[3.0, 0.0, 0.0]), Temperature::new(1e6).unwrap()).unwrap();
        for &x in hot.as_slice() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-5);
        }

        let sharp = temperature_scale(&lv(&[2.0, 0.0]), Temperature::new(0.5).unwrap()).unwrap();
        let e = (-4f64).exp();
        assert_abs_diff_eq!(sharp.get(0), 1.0 / (1.0 + e), epsilon = 1e-15);
        assert_abs_diff_eq!(sharp.get(1), e / (1.0 + e), epsilon = 1e-15);
    }

    #[test]
    fn temperature_must_be_positive() {
        assert!(matches!(Temperature::new(0.0), Err(CalibError::Parameter(_))));
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.7, 0.7]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        // exact one-hot is accepted and clamped downstream
        let one_hot = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(one_hot.clamped(), vec![1.0 - EPS, EPS]);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.3]), 1);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) == 1.0);
        assert!(sigmoid(-800.0) == 0.0);
        assert_abs_diff_eq!(sigmoid(4f64.ln()), 0.8, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 2..12),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&lv(&v)).unwrap();
            let sum: f64 = p.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.as_slice().iter().all(|&x| x >= 0.0));
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = softmax(&lv(&shifted)).unwrap();
            for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
