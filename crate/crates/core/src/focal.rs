//! Focal calibration maps and their inverses.
//!
//! The multiclass map rescales each coordinate by the reciprocal of the
//! (negated) focal-loss derivative and renormalizes:
//!
//! ```text
//! w(q) = q (1 - q)^(-gamma) / (1 - gamma * q ln q / (1 - q))
//! p_j  = w(q_j) / sum_k w(q_k)
//! ```
//!
//! `w` is a positive multiple of `1 / ((1-q)^gamma (gamma ln q / (1-q) - 1/q))`
//! with the sign folded in, so every weight is positive for `gamma > -1`.
//! The binary map is the `n = 2` case written in odds form.

use crate::error::{CalibError, Result};
use crate::prob::{clamp_prob, sigmoid, ProbVector, EPS};
use crate::roots::{bisect_increasing, bisect_increasing_clamped};

/// Weights switch to log space above this |gamma| to avoid overflow of `(1-q)^(-gamma)`.
const LINEAR_WEIGHT_MAX_GAMMA: f64 = 20.0;

/// Bracket width for the binary inverse.
const INVERSE_WIDTH: f64 = 1e-14;

/// Grid resolution of the monotonicity check run for negative gamma.
const MONOTONICITY_GRID: usize = 10_000;

/// Cheap admissibility check for the calibration-map role: finite and `> -1`.
///
/// At `gamma <= -1` the factor `1 - gamma q ln q / (1 - q)` reaches zero and the
/// map is undefined.
pub fn check_map_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma <= -1.0 {
        return Err(CalibError::Parameter(format!(
            "calibration-map gamma must be finite and > -1, got {gamma}"
        )));
    }
    Ok(())
}

/// Loss-role gamma must be finite and nonnegative.
pub fn check_loss_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(CalibError::Parameter(format!(
            "focal-loss gamma must be finite and >= 0, got {gamma}"
        )));
    }
    Ok(())
}

/// Full validation for a calibration-map gamma, including a numerical
/// monotonicity check when gamma is negative.
///
/// Negative gamma is accepted only if the binary map is strictly increasing on
/// a dense grid and the per-coordinate weight is strictly increasing on
/// `(0, 1/2]`; together these keep the multiclass map argmax-preserving.
pub fn validate_map_gamma(gamma: f64) -> Result<()> {
    check_map_gamma(gamma)?;
    if gamma >= 0.0 {
        return Ok(());
    }
    let mut prev_odds = f64::NEG_INFINITY;
    let mut prev_weight = f64::NEG_INFINITY;
    for i in 1..MONOTONICITY_GRID {
        let q = i as f64 / MONOTONICITY_GRID as f64;
        let odds = binary_log_odds(q, gamma);
        if !(odds > prev_odds) {
            return Err(CalibError::Parameter(format!(
                "focal map with gamma {gamma} is not monotone near q = {q}"
            )));
        }
        prev_odds = odds;
        if q <= 0.5 {
            let w = log_weight(q, gamma);
            if !(w > prev_weight) {
                return Err(CalibError::Parameter(format!(
                    "focal weight with gamma {gamma} decreases near q = {q}; argmax would not be preserved"
                )));
            }
            prev_weight = w;
        }
    }
    Ok(())
}

fn check_unit(q: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(CalibError::Domain(format!("{what} = {q} outside [0, 1]")));
    }
    Ok(())
}

/// Log-odds of the binary focal map at a clamped probability.
fn binary_log_odds(q: f64, gamma: f64) -> f64 {
    let q = clamp_prob(q);
    let lq = q.ln();
    let l1q = (-q).ln_1p();
    let num = q - gamma * (1.0 - q) * l1q;
    let den = (1.0 - q) - gamma * q * lq;
    gamma * (lq - l1q) + num.ln() - den.ln()
}

/// Binary focal calibration map `p̂(q)`.
pub fn focal_calib_binary(q: f64, gamma: f64) -> Result<f64> {
    check_unit(q, "probability")?;
    check_map_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(q);
    }
    Ok(sigmoid(binary_log_odds(q, gamma)))
}

/// `e^s ln(1 + e^(-s))`, bounded in `(0, 1)` and stable for any finite `s`.
fn phi(s: f64) -> f64 {
    if s >= 0.0 {
        let x = (-s).exp();
        if x == 0.0 {
            1.0
        } else {
            x.ln_1p() / x
        }
    } else {
        let e = s.exp();
        e * (-s + e.ln_1p())
    }
}

/// Log-odds of `FC(s) = p̂(sigmoid(s))`, computed entirely in logit space:
/// `(gamma + 1) s - ln(1 + gamma phi(s)) + ln(1 + gamma phi(-s))`.
///
/// Odd in `s`. Comparing bounds on this quantity avoids the saturation that
/// makes probability-space comparisons meaningless for large |s|.
pub fn focal_log_odds(s: f64, gamma: f64) -> f64 {
    (gamma + 1.0) * s - (gamma * phi(s)).ln_1p() + (gamma * phi(-s)).ln_1p()
}

/// Binary focal map applied on top of a sigmoid with logit `s`.
pub fn focal_calib_binary_logit(s: f64, gamma: f64) -> Result<f64> {
    if !s.is_finite() {
        return Err(CalibError::Ingestion(format!("logit {s} is not finite")));
    }
    check_map_gamma(gamma)?;
    Ok(sigmoid(focal_log_odds(s, gamma)))
}

/// `ln w(q)` for a clamped q.
fn log_weight(q: f64, gamma: f64) -> f64 {
    let q = clamp_prob(q);
    let l1 = (-q).ln_1p();
    let b = q * q.ln() / (1.0 - q);
    q.ln() - gamma * l1 - (-gamma * b).ln_1p()
}

/// Gamma-independent per-coordinate terms of the focal map.
#[derive(Debug, Clone, Default)]
pub(crate) struct FocalTerms {
    qc: Vec<f64>,
    lq: Vec<f64>,
    l1: Vec<f64>,
    b: Vec<f64>,
}

impl FocalTerms {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            qc: Vec::with_capacity(n),
            lq: Vec::with_capacity(n),
            l1: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
        }
    }

    /// Loads the terms for probability vector `q` (clamped internally).
    pub(crate) fn load(&mut self, q: &[f64]) {
        self.qc.clear();
        self.lq.clear();
        self.l1.clear();
        self.b.clear();
        for &p in q {
            let qc = clamp_prob(p);
            let lq = qc.ln();
            self.qc.push(qc);
            self.lq.push(lq);
            self.l1.push((-qc).ln_1p());
            self.b.push(qc * lq / (1.0 - qc));
        }
    }

    /// Writes the normalized focal map of the loaded vector into `out`.
    ///
    /// `gamma == 0` is not special-cased here; callers return the input unchanged.
    pub(crate) fn apply(&self, gamma: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.qc.len());
        let mut sum = 0.0;
        if gamma.abs() <= LINEAR_WEIGHT_MAX_GAMMA {
            for k in 0..out.len() {
                let w = self.qc[k] * (-gamma * self.l1[k]).exp() / (1.0 - gamma * self.b[k]);
                out[k] = w;
                sum += w;
            }
        } else {
            let mut max = f64::NEG_INFINITY;
            for k in 0..out.len() {
                let u = self.lq[k] - gamma * self.l1[k] - (-gamma * self.b[k]).ln_1p();
                out[k] = u;
                max = max.max(u);
            }
            for o in out.iter_mut() {
                *o = (*o - max).exp();
                sum += *o;
            }
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
}

/// Multiclass focal calibration map.
///
/// Inputs are clamped to `[EPS, 1 - EPS]`, so one-hot vectors are accepted.
/// `gamma == 0` returns the input unchanged.
pub fn focal_calib_multiclass(q: &ProbVector, gamma: f64) -> Result<ProbVector> {
    check_map_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(q.clone());
    }
    let mut terms = FocalTerms::with_capacity(q.len());
    terms.load(q.as_slice());
    let mut out = vec![0.0; q.len()];
    terms.apply(gamma, &mut out);
    Ok(ProbVector::from_normalized(out))
}

/// Numerical inverse of the binary focal map by bisection on `(EPS, 1 - EPS)`.
pub fn focal_calib_inverse_binary(p: f64, gamma: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CalibError::Domain(format!(
            "inverse focal map needs p in (0, 1), got {p}"
        )));
    }
    check_map_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(p);
    }
    // unclamped: p is strictly inside (0, 1)
    let target = p.ln() - (-p).ln_1p();
    bisect_increasing(
        |q| binary_log_odds(q, gamma),
        target,
        EPS,
        1.0 - EPS,
        INVERSE_WIDTH,
    )
    .map_err(|e| {
        CalibError::Numeric(format!(
            "cannot invert focal map (gamma {gamma}) at p = {p}: {e}"
        ))
    })
}

/// Numerical inverse of the multiclass focal map (gamma >= 0).
///
/// Finds the constant `c` with `sum_j w^{-1}(c p_j) = 1` by bisection on
/// `ln c`, each `w^{-1}` itself solved by bisection of the increasing
/// per-coordinate log-weight.
pub fn focal_calib_inverse_multiclass(p: &ProbVector, gamma: f64) -> Result<ProbVector> {
    check_loss_gamma(gamma).map_err(|_| {
        CalibError::Parameter(format!(
            "multiclass inverse needs gamma >= 0 (monotone weights), got {gamma}"
        ))
    })?;
    if gamma == 0.0 {
        return Ok(p.clone());
    }
    let log_p: Vec<f64> = p.clamped().iter().map(|x| x.ln()).collect();
    let max_lp = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let u = |q: f64| log_weight(q, gamma);
    let u_lo = u(EPS);
    let u_hi = u(1.0 - EPS);

    let n = log_p.len();
    let mut lo_q = vec![EPS; n];
    let mut hi_q = vec![1.0 - EPS; n];
    let mut scratch = vec![0.0; n];

    // q_j(c) within the current per-coordinate brackets; brackets only shrink
    // because each q_j is nondecreasing in c.
    let solve = |c: f64, lo_q: &[f64], hi_q: &[f64], out: &mut [f64]| -> f64 {
        let mut sum = 0.0;
        for j in 0..n {
            let q = bisect_increasing_clamped(u, log_p[j] + c, lo_q[j], hi_q[j], INVERSE_WIDTH);
            out[j] = q;
            sum += q;
        }
        sum
    };

    let mut c_lo = u_lo - max_lp;
    let mut c_hi = u_hi - max_lp;
    if !(c_lo.is_finite() && c_hi.is_finite()) {
        return Err(CalibError::Numeric(format!(
            "no normalization bracket for inverse focal map (gamma {gamma})"
        )));
    }
    let sum_lo = solve(c_lo, &lo_q, &hi_q, &mut scratch);
    let sum_hi = solve(c_hi, &lo_q, &hi_q, &mut scratch);
    if !(sum_lo <= 1.0 && sum_hi >= 1.0) {
        return Err(CalibError::Numeric(format!(
            "normalization root not bracketed: sums {sum_lo} .. {sum_hi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (c_lo + c_hi);
        if mid <= c_lo || mid >= c_hi {
            break;
        }
        let sum = solve(mid, &lo_q, &hi_q, &mut scratch);
        if sum < 1.0 {
            c_lo = mid;
            lo_q.copy_from_slice(&scratch);
        } else {
            c_hi = mid;
            hi_q.copy_from_slice(&scratch);
        }
    }
    let sum = solve(0.5 * (c_lo + c_hi), &lo_q, &hi_q, &mut scratch);
    for q in scratch.iter_mut() {
        *q /= sum;
    }
    Ok(ProbVector::from_normalized(scratch))
}
