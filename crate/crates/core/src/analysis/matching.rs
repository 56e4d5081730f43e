//! Minimax matching of the focal calibration map by temperature scaling.
//!
//! For a fixed gamma the error of temperature `T` is the largest absolute
//! difference, over an enumerated grid of logits, between the focal-calibrated
//! softmax and the temperature-scaled softmax. `T` is found by a
//! coarse-to-fine scan: each stage scans a window of one previous step on
//! either side of the incumbent.

use crate::error::{CalibError, Result};
use crate::focal::{check_map_gamma, focal_calib_binary_logit, FocalTerms};
use crate::format::fmt_g17;
use crate::grid::{grid_len, inclusive_grid};
use crate::prob::{sigmoid, tempered_softmax_into};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Coarse-to-fine temperature search: stage `k` uses `steps[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TSearch {
    pub t_min: f64,
    pub t_max: f64,
    pub steps: Vec<f64>,
}

impl Default for TSearch {
    fn default() -> Self {
        Self {
            t_min: 0.02,
            t_max: 2.0,
            steps: vec![0.05, 0.005, 0.0005, 0.0001],
        }
    }
}

impl TSearch {
    fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.t_min) || !(self.t_max >= self.t_min) || self.steps.is_empty() || !self.steps.iter().all(|&s| pos(s))
        {
            return Err(CalibError::Domain(format!("invalid temperature search {self:?}")));
        }
        Ok(())
    }

    /// Minimizes `err` over the staged grids; returns `(T, err(T), evaluations)`.
    ///
    /// Ties keep the smaller temperature.
    pub fn minimize(&self, mut err: impl FnMut(f64) -> f64) -> Result<(f64, f64, usize)> {
        self.validate()?;
        let mut best = (f64::NAN, f64::INFINITY);
        let mut evaluations = 0;
        let mut window = (self.t_min, self.t_max);
        for (k, &step) in self.steps.iter().enumerate() {
            if k > 0 {
                let prev = self.steps[k - 1];
                window = ((best.0 - prev).max(self.t_min), (best.0 + prev).min(self.t_max));
            }
            for t in inclusive_grid(window.0, window.1, step) {
                let e = err(t);
                evaluations += 1;
                if e < best.1 || (e == best.1 && t < best.0) {
                    best = (t, e);
                }
            }
        }
        if !best.0.is_finite() || !best.1.is_finite() {
            return Err(CalibError::Numeric("temperature search found no finite error".into()));
        }
        Ok((best.0, best.1, evaluations))
    }
}

/// Logit grid `[lo, hi]` with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl LogitGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi && step.is_finite() && step > 0.0) {
            return Err(CalibError::Domain(format!("invalid logit grid [{lo}, {hi}] step {step}")));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn points(&self) -> Vec<f64> {
        inclusive_grid(self.lo, self.hi, self.step)
    }

    pub fn len(&self) -> usize {
        grid_len(self.lo, self.hi, self.step)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Grids actually used for a match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchMeta {
    pub dim: usize,
    pub logit_grid: LogitGrid,
    /// Logit step asked for; differs from `logit_grid.step` when the point guard coarsened it.
    pub requested_logit_step: f64,
    pub coarsened: bool,
    pub points: usize,
    pub t_search: TSearch,
    pub t_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub gamma: f64,
    pub best_temperature: f64,
    pub best_inverse_temperature: f64,
    pub max_abs_error: f64,
    pub meta: MatchMeta,
}

/// Temperature whose sigmoid best matches the binary focal map in max-abs error.
pub fn minimax_match_binary(gamma: f64, logits: LogitGrid, t_search: &TSearch) -> Result<MatchResult> {
    check_map_gamma(gamma)?;
    let s = logits.points();
    if s.is_empty() {
        return Err(CalibError::Domain("empty logit grid".into()));
    }
    let fc = s
        .iter()
        .map(|&x| focal_calib_binary_logit(x, gamma))
        .collect::<Result<Vec<f64>>>()?;
    let (t, err, evals) = t_search.minimize(|t| {
        let inv_t = 1.0 / t;
        s.iter()
            .zip(&fc)
            .map(|(&x, &f)| (f - sigmoid(x * inv_t)).abs())
            .fold(0.0, f64::max)
    })?;
    Ok(MatchResult {
        gamma,
        best_temperature: t,
        best_inverse_temperature: 1.0 / t,
        max_abs_error: err,
        meta: MatchMeta {
            dim: 2,
            logit_grid: logits,
            requested_logit_step: logits.step,
            coarsened: false,
            points: s.len(),
            t_search: t_search.clone(),
            t_evaluations: evals,
        },
    })
}

/// Matching over the `dim`-class simplex.
///
/// Logit vectors range over the grid in their first `dim - 1` coordinates with
/// the last pinned to 0, which covers every softmax output the full grid
/// would. If the point count exceeds `max_points`, the step is doubled until
/// it fits and the result is marked as coarsened.
pub fn minimax_match_simplex(
    dim: usize,
    gamma: f64,
    logits: LogitGrid,
    t_search: &TSearch,
    max_points: usize,
) -> Result<MatchResult> {
    check_map_gamma(gamma)?;
    if dim < 2 {
        return Err(CalibError::Domain(format!("simplex matching needs dim >= 2, got {dim}")));
    }
    let free = dim - 1;
    let mut grid = logits;
    while grid.len().checked_pow(free as u32).is_none_or(|p| p > max_points) {
        grid.step *= 2.0;
        if grid.len() <= 1 {
            return Err(CalibError::Domain(format!("point guard {max_points} leaves no usable logit grid")));
        }
    }
    let axis = grid.points();
    let count = axis.len().pow(free as u32);

    // row-major enumeration of the free coordinates; the last logit is 0
    let mut z = Vec::with_capacity(count * dim);
    let mut idx = vec![0usize; free];
    for _ in 0..count {
        z.extend(idx.iter().map(|&i| axis[i]));
        z.push(0.0);
        for k in (0..free).rev() {
            idx[k] += 1;
            if idx[k] < axis.len() {
                break;
            }
            idx[k] = 0;
        }
    }

    let mut fc = vec![0.0; count * dim];
    let mut q = vec![0.0; dim];
    let mut terms = FocalTerms::with_capacity(dim);
    for (row, out) in z.chunks_exact(dim).zip(fc.chunks_exact_mut(dim)) {
        tempered_softmax_into(row, 1.0, &mut q);
        if gamma == 0.0 {
            out.copy_from_slice(&q);
        } else {
            terms.load(&q);
            terms.apply(gamma, out);
        }
    }

    let mut ts = vec![0.0; dim];
    let (t, err, evals) = t_search.minimize(|t| {
        let mut worst: f64 = 0.0;
        for (row, f) in z.chunks_exact(dim).zip(fc.chunks_exact(dim)) {
            tempered_softmax_into(row, t, &mut ts);
            for (a, b) in f.iter().zip(&ts) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    })?;
    Ok(MatchResult {
        gamma,
        best_temperature: t,
        best_inverse_temperature: 1.0 / t,
        max_abs_error: err,
        meta: MatchMeta {
            dim,
            logit_grid: grid,
            requested_logit_step: logits.step,
            coarsened: grid.step != logits.step,
            points: count,
            t_search: t_search.clone(),
            t_evaluations: evals,
        },
    })
}

/// Settings shared by every per-gamma match of a line fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub logits: LogitGrid,
    pub t_search: TSearch,
    /// Point guard for simplex enumeration (ignored for dim 2).
    pub max_points: usize,
}

impl MatchConfig {
    /// Logits on `(-20, 20)` in steps of 0.01.
    pub fn binary_default() -> Self {
        Self {
            logits: LogitGrid { lo: -20.0, hi: 20.0, step: 0.01 },
            t_search: TSearch::default(),
            max_points: usize::MAX,
        }
    }

    /// Logits on `(-5, 5)`: step 0.05 for dim 3, 0.1 for dim 4 and above.
    pub fn simplex_default(dim: usize) -> Self {
        let step = if dim <= 3 { 0.05 } else { 0.1 };
        Self {
            logits: LogitGrid { lo: -5.0, hi: 5.0, step },
            t_search: TSearch::default(),
            max_points: 2_000_000,
        }
    }

    pub fn default_for(dim: usize) -> Self {
        if dim == 2 {
            Self::binary_default()
        } else {
            Self::simplex_default(dim)
        }
    }
}

/// Least-squares line `1/T = slope * gamma + intercept` through per-gamma matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub dim: usize,
    pub slope: f64,
    pub intercept: f64,
    pub method: String,
    pub rmse: f64,
    pub max_abs_residual: f64,
    pub r_squared: f64,
    pub matches: Vec<MatchResult>,
}

impl LinearFit {
    /// Writes `gamma,inverse_temperature,temperature,max_abs_error,fitted_inverse_temperature` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "gamma,inverse_temperature,temperature,max_abs_error,fitted_inverse_temperature")?;
        for m in &self.matches {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_g17(m.gamma),
                fmt_g17(m.best_inverse_temperature),
                fmt_g17(m.best_temperature),
                fmt_g17(m.max_abs_error),
                fmt_g17(self.slope * m.gamma + self.intercept)
            )?;
        }
        Ok(())
    }
}

/// Ordinary least squares; returns `(slope, intercept)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(CalibError::Domain("least squares needs at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(CalibError::Domain("least squares needs two distinct x values".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Default gammas for a line fit: 0.5 to 5 in steps of 0.5 for dim 2, to 10 above.
pub fn default_line_gammas(dim: usize) -> Vec<f64> {
    let hi = if dim == 2 { 5.0 } else { 10.0 };
    inclusive_grid(0.5, hi, 0.5)
}

/// Minimum number of gamma values behind a line fit.
pub const MIN_LINE_POINTS: usize = 10;

/// Matches every gamma at dimension `dim` and fits the line through `(gamma, 1/T)`.
pub fn linear_fit_gamma_inv_t(dim: usize, gammas: &[f64], config: &MatchConfig) -> Result<LinearFit> {
    if !(2..=4).contains(&dim) {
        return Err(CalibError::Domain(format!("line fit supports dim 2, 3 or 4, got {dim}")));
    }
    if gammas.len() < MIN_LINE_POINTS {
        return Err(CalibError::Domain(format!(
            "line fit needs at least {MIN_LINE_POINTS} gamma values, got {}",
            gammas.len()
        )));
    }
    let matches = gammas
        .iter()
        .map(|&g| {
            if dim == 2 {
                minimax_match_binary(g, config.logits, &config.t_search)
            } else {
                minimax_match_simplex(dim, g, config.logits, &config.t_search, config.max_points)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = matches.iter().map(|m| m.best_inverse_temperature).collect();
    let (slope, intercept) = least_squares(gammas, &y)?;
    let residuals: Vec<f64> = gammas.iter().zip(&y).map(|(g, v)| v - (slope * g + intercept)).collect();
    let n = residuals.len() as f64;
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let my = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(LinearFit {
        dim,
        slope,
        intercept,
        method: "least-squares".into(),
        rmse,
        max_abs_residual: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        r_squared: if sst > 0.0 { 1.0 - sse / sst } else { 1.0 },
        matches,
    })
}
