//! Focal-loss risk minimizer and loss-landscape tables for isoline plots.

use crate::error::{CalibError, Result};
use crate::focal::{check_loss_gamma, focal_calib_inverse_multiclass};
use crate::format::fmt_g17;
use crate::grid::inclusive_grid;
use crate::loss::{focal_grad_unchecked, focal_partial};
use crate::prob::{clamp_prob, ProbVector, EPS};
use crate::roots::bisect_increasing;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Default isoline levels, as fractions of the table's rows.
pub const DEFAULT_PERCENTILES: [f64; 3] = [0.03, 0.12, 0.20];

/// `argmin_q p FL(q) + (1 - p) FL(1 - q)` for binary truth `p`.
///
/// The risk is convex, so its derivative `p FL'(q) - (1 - p) FL'(1 - q)` is
/// increasing and its root is found by bisection to width 1e-13.
pub fn focal_risk_minimizer(p_true: f64, gamma: f64) -> Result<f64> {
    if !(p_true > 0.0 && p_true < 1.0) {
        return Err(CalibError::Domain(format!("truth {p_true} outside (0, 1)")));
    }
    check_loss_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(p_true);
    }
    let slope = |q: f64| p_true * focal_grad_unchecked(q, gamma) - (1.0 - p_true) * focal_grad_unchecked(1.0 - q, gamma);
    bisect_increasing(slope, 0.0, EPS, 1.0 - EPS, 1e-13)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub q: Vec<f64>,
    pub brier: f64,
    pub cross_entropy: f64,
    pub focal: f64,
    pub properized_focal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileLevel {
    pub percentile: f64,
    pub brier: f64,
    pub cross_entropy: f64,
    pub focal: f64,
    pub properized_focal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeTable {
    pub p_true: Vec<f64>,
    pub gamma: f64,
    pub step: f64,
    pub rows: Vec<LandscapeRow>,
    pub levels: Vec<PercentileLevel>,
}

impl LandscapeTable {
    /// Writes `q_0,...,q_{n-1},brier,cross_entropy,focal,properized_focal` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.p_true.len();
        let qs: Vec<String> = (0..n).map(|j| format!("q_{j}")).collect();
        writeln!(w, "{},brier,cross_entropy,focal,properized_focal", qs.join(","))?;
        for r in &self.rows {
            let q: Vec<String> = r.q.iter().map(|x| fmt_g17(*x)).collect();
            writeln!(
                w,
                "{},{},{},{},{}",
                q.join(","),
                fmt_g17(r.brier),
                fmt_g17(r.cross_entropy),
                fmt_g17(r.focal),
                fmt_g17(r.properized_focal)
            )?;
        }
        Ok(())
    }
}

/// Nearest-rank value at fraction `pct` of the sorted values.
fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let rank = (pct * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Conditional risks `sum_i p_i L(q, i)` of four losses over an interior grid
/// of predictions `q` with spacing `step` (an interval for n = 2, the
/// triangle for n = 3), plus nearest-rank percentile levels of each column.
pub fn loss_landscape_table(p_true: &ProbVector, gamma: f64, step: f64, percentiles: &[f64]) -> Result<LandscapeTable> {
    check_loss_gamma(gamma)?;
    let n = p_true.len();
    if !(n == 2 || n == 3) {
        return Err(CalibError::Domain(format!("landscape tables support n = 2 or 3, got {n}")));
    }
    if !(step > 0.0 && step < 0.5) {
        return Err(CalibError::Domain(format!("grid step {step} outside (0, 0.5)")));
    }
    if percentiles.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(CalibError::Domain("percentile levels must lie in (0, 1]".into()));
    }
    let axis = inclusive_grid(step, 1.0 - step / 2.0, step);
    let mut points: Vec<Vec<f64>> = Vec::new();
    if n == 2 {
        points.extend(axis.iter().map(|&a| vec![1.0 - a, a]));
    } else {
        for &a in &axis {
            for &b in &axis {
                let c = 1.0 - a - b;
                if c > step / 2.0 {
                    points.push(vec![a, b, c]);
                }
            }
        }
    }
    let p = p_true.as_slice();
    let mut rows = Vec::with_capacity(points.len());
    for q in points {
        let qv = ProbVector::from_normalized(q.clone());
        let pre = focal_calib_inverse_multiclass(&qv, gamma)?;
        let mut row = LandscapeRow {
            q,
            brier: 0.0,
            cross_entropy: 0.0,
            focal: 0.0,
            properized_focal: 0.0,
        };
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            let brier_i: f64 = row
                .q
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let y = if k == i { 1.0 } else { 0.0 };
                    (x - y) * (x - y)
                })
                .sum();
            row.brier += pi * brier_i;
            row.cross_entropy += pi * -clamp_prob(row.q[i]).ln();
            row.focal += pi * focal_partial(row.q[i], gamma);
            row.properized_focal += pi * focal_partial(pre.get(i), gamma);
        }
        rows.push(row);
    }
    let column = |f: fn(&LandscapeRow) -> f64| {
        let mut v: Vec<f64> = rows.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let cols = [
        column(|r| r.brier),
        column(|r| r.cross_entropy),
        column(|r| r.focal),
        column(|r| r.properized_focal),
    ];
    let levels = percentiles
        .iter()
        .map(|&pct| PercentileLevel {
            percentile: pct,
            brier: nearest_rank(&cols[0], pct),
            cross_entropy: nearest_rank(&cols[1], pct),
            focal: nearest_rank(&cols[2], pct),
            properized_focal: nearest_rank(&cols[3], pct),
        })
        .collect();
    Ok(LandscapeTable {
        p_true: p.to_vec(),
        gamma,
        step,
        rows,
        levels,
    })
}
