//! Temperature-scaling envelopes of the binary focal map.
//!
//! For `gamma > 0` and logit `s > 0` the focal log-odds `l(s)` satisfy
//! `(gamma + 1 - ln(gamma + 1) / 2) s < l(s) < (gamma + 1) s`, with both
//! inequalities reversed for `s < 0` and equality at `s = 0`. All comparisons
//! are made on log-odds, where they stay meaningful after the probabilities
//! themselves round to 0 or 1.

use super::matching::LogitGrid;
use crate::error::{CalibError, Result};
use crate::focal::focal_log_odds;
use crate::format::fmt_g17;
use crate::prob::sigmoid;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub gamma: f64,
    /// `1 / (gamma + 1)`: the sharper envelope.
    pub theoretical_lower_t: f64,
    /// `1 / (gamma + 1 - ln(gamma + 1) / 2)`.
    pub theoretical_upper_t: f64,
    /// Largest grid temperature whose map still dominates the focal map for `s > 0`.
    pub experimental_lower_t: f64,
    /// Smallest grid temperature whose map stays below the focal map for `s > 0`.
    pub experimental_upper_t: f64,
    /// Extremes of `l(s) / s` over the nonzero grid logits.
    pub max_slope: f64,
    pub min_slope: f64,
    pub logit_grid: LogitGrid,
    pub t_step: f64,
    pub points_checked: usize,
}

impl BoundResult {
    /// Writes `s,focal,ts_theoretical_lower,ts_theoretical_upper,ts_experimental_lower,ts_experimental_upper`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "s,focal,ts_theoretical_lower,ts_theoretical_upper,ts_experimental_lower,ts_experimental_upper"
        )?;
        for s in self.logit_grid.points() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_g17(s),
                fmt_g17(sigmoid(focal_log_odds(s, self.gamma))),
                fmt_g17(sigmoid(s / self.theoretical_lower_t)),
                fmt_g17(sigmoid(s / self.theoretical_upper_t)),
                fmt_g17(sigmoid(s / self.experimental_lower_t)),
                fmt_g17(sigmoid(s / self.experimental_upper_t)),
            )?;
        }
        Ok(())
    }
}

/// `(1 / (gamma + 1), 1 / (gamma + 1 - ln(gamma + 1) / 2))`.
pub fn theoretical_bounds(gamma: f64) -> (f64, f64) {
    let g1 = gamma + 1.0;
    (1.0 / g1, 1.0 / (g1 - g1.ln() / 2.0))
}

fn check_positive_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(CalibError::Domain(format!("bound analysis needs gamma > 0, got {gamma}")));
    }
    Ok(())
}

/// Verifies the strict envelope at every grid logit; returns the number of points checked.
pub fn check_sandwich(gamma: f64, grid: LogitGrid) -> Result<usize> {
    check_positive_gamma(gamma)?;
    let g1 = gamma + 1.0;
    let lower_slope = g1 - g1.ln() / 2.0;
    let points = grid.points();
    for &s in &points {
        let l = focal_log_odds(s, gamma);
        let (a, b) = (lower_slope * s, g1 * s);
        let ok = if s > 0.0 {
            a < l && l < b
        } else if s < 0.0 {
            b < l && l < a
        } else {
            l == 0.0
        };
        if !ok {
            return Err(CalibError::Verification(format!(
                "envelope violated at gamma {gamma}, s {s}: log-odds {l} not between {a} and {b}"
            )));
        }
    }
    Ok(points.len())
}

fn to_step(x: f64, step: f64, up: bool) -> f64 {
    let k = x / step;
    let k = if up { k.ceil() } else { k.floor() };
    ((k * step) * 1e12).round() / 1e12
}

/// Theoretical envelope plus the tightest envelope on a temperature grid of spacing `t_step`.
pub fn bound_check(gamma: f64, grid: LogitGrid, t_step: f64) -> Result<BoundResult> {
    check_positive_gamma(gamma)?;
    if !(t_step.is_finite() && t_step > 0.0) {
        return Err(CalibError::Domain(format!("temperature step must be positive, got {t_step}")));
    }
    let points_checked = check_sandwich(gamma, grid)?;
    let (mut max_slope, mut min_slope) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in grid.points() {
        if s != 0.0 {
            let r = focal_log_odds(s, gamma) / s;
            max_slope = max_slope.max(r);
            min_slope = min_slope.min(r);
        }
    }
    if !max_slope.is_finite() {
        return Err(CalibError::Domain("logit grid has no nonzero points".into()));
    }
    let (theoretical_lower_t, theoretical_upper_t) = theoretical_bounds(gamma);
    let experimental_lower_t = to_step(1.0 / max_slope, t_step, false);
    let experimental_upper_t = to_step(1.0 / min_slope, t_step, true);
    let result = BoundResult {
        gamma,
        theoretical_lower_t,
        theoretical_upper_t,
        experimental_lower_t,
        experimental_upper_t,
        max_slope,
        min_slope,
        logit_grid: grid,
        t_step,
        points_checked,
    };
    let tightened = theoretical_lower_t <= experimental_lower_t
        && experimental_lower_t <= experimental_upper_t
        && experimental_upper_t <= theoretical_upper_t;
    if !tightened {
        return Err(CalibError::Verification(format!(
            "experimental envelope not inside the theoretical one at gamma {gamma}: {result:?}"
        )));
    }
    Ok(result)
}
