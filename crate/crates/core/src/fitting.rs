//! Validation-set grid search for temperature and focal temperature scaling.
//!
//! Every candidate is scored through the same row kernel that
//! [`apply_calibrator`] uses, so a fit's reported criterion value equals the
//! metric of its applied parameters bit for bit.
//!
//! Ties are broken by the lowest criterion value, then `|T - 1|`, then
//! `|gamma|`, then grid order (gamma-major, then T).

use crate::calibrator::{CalibratorParams, Family, RowKernel};
use crate::data::LabeledLogits;
use crate::error::{CalibError, Result};
use crate::focal::validate_map_gamma;
use crate::grid::{inclusive_grid, snap};
use crate::metrics::{ece_from_scores, nll_from_label_probs, PredictionBatch, DEFAULT_BINS};
use crate::prob::{argmax, ProbVector, Temperature};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Ece,
    Nll,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Ece => "ece",
            Criterion::Nll => "nll",
        })
    }
}

impl FromStr for Criterion {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ece" => Ok(Criterion::Ece),
            "nll" => Ok(Criterion::Nll),
            other => Err(CalibError::Parameter(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Candidate grid for the parameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gammas: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub criterion: Criterion,
    pub bins: usize,
}

impl GridSpec {
    pub const DEFAULT_GAMMAS: [f64; 9] = [-0.5, -0.25, 0.05, 0.25, 0.37, 0.5, 0.75, 1.0, 5.0];

    /// Nine gamma values and `T` from 0.01 to 5 in steps of 0.01.
    pub fn default_protocol(criterion: Criterion) -> Self {
        Self {
            gammas: Self::DEFAULT_GAMMAS.to_vec(),
            t_min: 0.01,
            t_max: 5.0,
            t_step: 0.01,
            criterion,
            bins: DEFAULT_BINS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(CalibError::Parameter("gamma grid is empty".into()));
        }
        for (i, &g) in self.gammas.iter().enumerate() {
            validate_map_gamma(g)?;
            if self.gammas[..i].contains(&g) {
                return Err(CalibError::Parameter(format!("gamma {g} listed twice")));
            }
        }
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.t_min) || !ok(self.t_step) || !self.t_max.is_finite() || self.t_max < self.t_min {
            return Err(CalibError::Parameter(format!(
                "invalid temperature grid: min {}, max {}, step {}",
                self.t_min, self.t_max, self.t_step
            )));
        }
        if self.bins == 0 {
            return Err(CalibError::Parameter("number of bins must be positive".into()));
        }
        Ok(())
    }

    /// `t_min + i * t_step` for every `i` that stays within `t_max`, both ends inclusive.
    pub fn temperatures(&self) -> Vec<f64> {
        inclusive_grid(self.t_min, self.t_max, self.t_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub gamma_ev: f64,
    pub temperature: f64,
    pub criterion_value: f64,
}

/// Outcome of a parameter search, including every evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub best: CalibratorParams,
    pub criterion: Criterion,
    pub criterion_value: f64,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_gammas: Option<[f64; 2]>,
    pub trace: Vec<TraceEntry>,
}

fn tie_break(a: &TraceEntry, b: &TraceEntry) -> Ordering {
    a.criterion_value
        .total_cmp(&b.criterion_value)
        .then_with(|| (a.temperature - 1.0).abs().total_cmp(&(b.temperature - 1.0).abs()))
        .then_with(|| a.gamma_ev.abs().total_cmp(&b.gamma_ev.abs()))
}

/// Index of the winning trace entry; earlier entries win full ties.
fn select(trace: &[TraceEntry]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in trace.iter().enumerate() {
        if !e.criterion_value.is_finite() {
            return Err(CalibError::Numeric(format!(
                "criterion is not finite at gamma {} T {}",
                e.gamma_ev, e.temperature
            )));
        }
        match best {
            Some(b) if tie_break(e, &trace[b]) != Ordering::Less => {}
            _ => best = Some(i),
        }
    }
    best.ok_or_else(|| CalibError::Parameter("no candidates to evaluate".into()))
}

fn check_data(data: &LabeledLogits) -> Result<()> {
    if data.is_empty() {
        return Err(CalibError::Domain("validation set is empty".into()));
    }
    Ok(())
}

/// Criterion values at temperature `t` for each gamma in `gammas`.
fn evaluate_at(data: &LabeledLogits, t: f64, gammas: &[f64], criterion: Criterion, bins: usize) -> Result<Vec<f64>> {
    let n = data.n_classes();
    let rows = data.len();
    let mut kernel = RowKernel::new(n);
    let mut out = vec![0.0; n];
    let mut scores = vec![vec![0.0; rows]; gammas.len()];
    let mut correct = match criterion {
        Criterion::Ece => vec![vec![false; rows]; gammas.len()],
        Criterion::Nll => Vec::new(),
    };
    for (i, (z, y)) in data.rows().enumerate() {
        kernel.load(z, t);
        for (g, &gamma) in gammas.iter().enumerate() {
            kernel.apply(gamma, &mut out);
            match criterion {
                Criterion::Ece => {
                    let j = argmax(&out);
                    scores[g][i] = out[j];
                    correct[g][i] = j == y;
                }
                Criterion::Nll => scores[g][i] = out[y],
            }
        }
    }
    (0..gammas.len())
        .map(|g| match criterion {
            Criterion::Ece => ece_from_scores(&scores[g], &correct[g], bins),
            Criterion::Nll => nll_from_label_probs(&scores[g]),
        })
        .collect()
}

/// Full `gammas x temperatures` sweep in gamma-major trace order.
fn sweep(data: &LabeledLogits, gammas: &[f64], ts: &[f64], grid: &GridSpec) -> Result<Vec<TraceEntry>> {
    let mut trace = vec![
        TraceEntry {
            gamma_ev: 0.0,
            temperature: 0.0,
            criterion_value: 0.0
        };
        gammas.len() * ts.len()
    ];
    for (ti, &t) in ts.iter().enumerate() {
        let values = evaluate_at(data, t, gammas, grid.criterion, grid.bins)?;
        for (gi, (&gamma, v)) in gammas.iter().zip(values).enumerate() {
            trace[gi * ts.len() + ti] = TraceEntry {
                gamma_ev: gamma,
                temperature: t,
                criterion_value: v,
            };
        }
    }
    Ok(trace)
}

fn finish(
    family: Family,
    trace: Vec<TraceEntry>,
    grid: &GridSpec,
    probe_gammas: Option<[f64; 2]>,
) -> Result<FitResult> {
    let best = trace[select(&trace)?];
    let params = CalibratorParams::new(family, best.gamma_ev, Temperature::new(best.temperature)?)?;
    Ok(FitResult {
        best: params,
        criterion: grid.criterion,
        criterion_value: best.criterion_value,
        grid: grid.clone(),
        probe_gammas,
        trace,
    })
}

/// Temperature scaling: sweeps the T grid with gamma fixed at 0.
pub fn fit_temperature(val: &LabeledLogits, grid: &GridSpec) -> Result<FitResult> {
    check_data(val)?;
    let grid = GridSpec {
        gammas: vec![0.0],
        ..grid.clone()
    };
    grid.validate()?;
    let trace = sweep(val, &grid.gammas, &grid.temperatures(), &grid)?;
    finish(Family::Temperature, trace, &grid, None)
}

/// Exhaustive search over every `(gamma, T)` pair of the grid.
pub fn fit_focal_temperature(val: &LabeledLogits, grid: &GridSpec) -> Result<FitResult> {
    check_data(val)?;
    grid.validate()?;
    let trace = sweep(val, &grid.gammas, &grid.temperatures(), grid)?;
    finish(Family::FocalTemperature, trace, grid, None)
}

/// Lower and upper quartile of the distinct nonzero grid gammas.
///
/// Inner probes keep clear of the grid ends, where the optimal temperature
/// of an extreme gamma can sit on the edge of the T grid and tilt the line.
pub fn default_probe_gammas(grid: &GridSpec) -> Result<[f64; 2]> {
    let mut nonzero: Vec<f64> = grid.gammas.iter().copied().filter(|&g| g != 0.0).collect();
    nonzero.sort_by(f64::total_cmp);
    nonzero.dedup();
    let k = nonzero.len();
    if k < 2 {
        return Err(CalibError::Parameter(
            "line search needs two distinct nonzero gamma values".into(),
        ));
    }
    let lo = ((k - 1) as f64 / 4.0).round() as usize;
    let hi = ((3 * (k - 1)) as f64 / 4.0).round().max(lo as f64 + 1.0) as usize;
    Ok([nonzero[lo], nonzero[hi.min(k - 1)]])
}

/// Line-search shortcut: sweep T at two probe gammas, join the two optima by a
/// line in `(gamma, 1/T)`, then walk the line once more over the `m` grid
/// temperatures, pairing each with the gamma the line assigns to it.
///
/// Line points whose gamma leaves the grid's gamma range or fails map
/// validation are skipped, so the trace holds at most `3 m` entries. If both
/// probes select the same temperature the line is flat in gamma and its `m`
/// points are spread evenly over the gamma range at that temperature.
pub fn fit_focal_temperature_line(val: &LabeledLogits, grid: &GridSpec, probe_gammas: [f64; 2]) -> Result<FitResult> {
    check_data(val)?;
    grid.validate()?;
    let [g1, g2] = probe_gammas;
    validate_map_gamma(g1)?;
    validate_map_gamma(g2)?;
    if g1 == g2 {
        return Err(CalibError::Parameter(format!("probe gammas must differ, both are {g1}")));
    }
    let ts = grid.temperatures();
    let mut trace = sweep(val, &[g1], &ts, grid)?;
    trace.extend(sweep(val, &[g2], &ts, grid)?);
    let m = ts.len();
    let t1 = trace[select(&trace[..m])?].temperature;
    let t2 = trace[m + select(&trace[m..])?].temperature;
    let lo = grid.gammas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let candidates: Vec<(f64, f64)> = if t1 == t2 {
        (0..m)
            .map(|k| {
                let frac = if m == 1 { 0.0 } else { k as f64 / (m - 1) as f64 };
                (snap(lo + (hi - lo) * frac), t1)
            })
            .collect()
    } else {
        let slope = (1.0 / t2 - 1.0 / t1) / (g2 - g1);
        let intercept = 1.0 / t1 - slope * g1;
        ts.iter().map(|&t| (snap((1.0 / t - intercept) / slope), t)).collect()
    };
    for (gamma, t) in candidates {
        if gamma < lo - 1e-12 || gamma > hi + 1e-12 || validate_map_gamma(gamma).is_err() {
            continue;
        }
        let v = evaluate_at(val, t, &[gamma], grid.criterion, grid.bins)?[0];
        trace.push(TraceEntry {
            gamma_ev: gamma,
            temperature: t,
            criterion_value: v,
        });
    }
    finish(Family::FocalTemperature, trace, grid, Some(probe_gammas))
}

/// Calibrated predictions for every row; labels pass through.
pub fn apply_calibrator(data: &LabeledLogits, params: &CalibratorParams) -> Result<PredictionBatch> {
    validate_map_gamma(params.gamma_ev)?;
    let n = data.n_classes();
    let mut kernel = RowKernel::new(n);
    let mut probs = Vec::with_capacity(data.len());
    for (z, _) in data.rows() {
        let mut out = vec![0.0; n];
        kernel.load(z, params.temperature.value());
        kernel.apply(params.gamma_ev, &mut out);
        probs.push(ProbVector::from_normalized(out));
    }
    PredictionBatch::new(probs, data.labels().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ece_equal_mass, nll};

    fn toy() -> LabeledLogits {
        LabeledLogits::from_flat(
            3,
            vec![
                2.0, 0.5, -1.0, 0.1, 1.2, 0.3, -0.4, 0.2, 2.5, 3.0, 2.9, 0.0, 1.0, -1.0, 0.5, 0.0, 0.7, 0.6,
            ],
            vec![0, 2, 2, 1, 0, 1],
        )
        .unwrap()
    }

    fn grid(gammas: &[f64], criterion: Criterion) -> GridSpec {
        GridSpec {
            gammas: gammas.to_vec(),
            t_min: 0.5,
            t_max: 2.0,
            t_step: 0.05,
            criterion,
            bins: 2,
        }
    }

    #[test]
    fn temperature_grid_is_inclusive() {
        let g = GridSpec::default_protocol(Criterion::Ece);
        let ts = g.temperatures();
        assert_eq!(ts.len(), 500);
        assert_eq!(ts[499], 5.0);
        assert_eq!(ts[99], 1.0);
        assert_eq!(grid(&[0.0], Criterion::Ece).temperatures().len(), 31);
    }

    #[test]
    fn grid_validation() {
        assert!(grid(&[], Criterion::Ece).validate().is_err());
        assert!(grid(&[1.0, 1.0], Criterion::Ece).validate().is_err());
        assert!(grid(&[-1.0], Criterion::Ece).validate().is_err());
        let mut g = grid(&[0.0], Criterion::Ece);
        g.t_min = 0.0;
        assert!(g.validate().is_err());
        g.t_min = 3.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn single_point_grid() {
        let mut g = grid(&[0.0], Criterion::Nll);
        g.t_min = 1.0;
        g.t_max = 1.0;
        let fit = fit_temperature(&toy(), &g).unwrap();
        assert_eq!(fit.best.temperature.value(), 1.0);
        assert_eq!(fit.trace.len(), 1);
        let applied = apply_calibrator(&toy(), &fit.best).unwrap();
        assert_eq!(fit.criterion_value, nll(&applied).unwrap());
    }

    #[test]
    fn fit_value_reproduced_by_apply() {
        for criterion in [Criterion::Ece, Criterion::Nll] {
            let g = grid(&[-0.25, 0.0, 0.5, 2.0], criterion);
            let fit = fit_focal_temperature(&toy(), &g).unwrap();
            assert_eq!(fit.trace.len(), 4 * 31);
            let batch = apply_calibrator(&toy(), &fit.best).unwrap();
            let v = match criterion {
                Criterion::Ece => ece_equal_mass(&batch, 2).unwrap(),
                Criterion::Nll => nll(&batch).unwrap(),
            };
            assert_eq!(v, fit.criterion_value);
            let min = fit.trace.iter().map(|e| e.criterion_value).fold(f64::INFINITY, f64::min);
            assert_eq!(min, fit.criterion_value);
        }
    }

    #[test]
    fn zero_gamma_grid_matches_temperature_fit() {
        let g = grid(&[0.0], Criterion::Nll);
        let a = fit_temperature(&toy(), &g).unwrap();
        let b = fit_focal_temperature(&toy(), &g).unwrap();
        assert_eq!(a.criterion_value, b.criterion_value);
        assert_eq!(a.best.temperature, b.best.temperature);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn superset_dominance() {
        let g = grid(&[0.0, 0.5, 1.0, 3.0], Criterion::Ece);
        let ts = fit_temperature(&toy(), &g).unwrap();
        let fts = fit_focal_temperature(&toy(), &g).unwrap();
        assert!(fts.criterion_value <= ts.criterion_value);
    }

    #[test]
    fn tie_break_prefers_least_intervention() {
        let e = |g: f64, t: f64, v: f64| TraceEntry {
            gamma_ev: g,
            temperature: t,
            criterion_value: v,
        };
        let trace = [e(1.0, 1.5, 0.1), e(2.0, 0.8, 0.1), e(-0.5, 1.1, 0.1), e(0.5, 1.1, 0.1), e(3.0, 3.0, 0.2)];
        assert_eq!(select(&trace).unwrap(), 2);
        let trace = [e(1.0, 1.0, 0.3), e(1.0, 1.0, 0.3)];
        assert_eq!(select(&trace).unwrap(), 0);
    }

    #[test]
    fn line_search_accounting() {
        let g = grid(&[0.0, 0.5, 1.0, 3.0], Criterion::Ece);
        let probes = default_probe_gammas(&g).unwrap();
        assert_eq!(probes, [1.0, 3.0]);
        let fit = fit_focal_temperature_line(&toy(), &g, probes).unwrap();
        assert!(fit.trace.len() > 2 * 31 && fit.trace.len() <= 3 * 31);
        let ts = g.temperatures();
        assert!(fit.trace.iter().all(|e| ts.contains(&e.temperature)));
        // walk entries lie on the line through the two probe optima
        let best = |g: f64| {
            let part: Vec<TraceEntry> = fit.trace[..62].iter().copied().filter(|e| e.gamma_ev == g).collect();
            part[select(&part).unwrap()].temperature
        };
        let (t1, t2) = (best(1.0), best(3.0));
        if t1 != t2 {
            let slope = (1.0 / t2 - 1.0 / t1) / 2.0;
            for e in &fit.trace[62..] {
                assert!((1.0 / e.temperature - (1.0 / t1 + slope * (e.gamma_ev - 1.0))).abs() < 1e-9);
                assert!((0.0..=3.0).contains(&e.gamma_ev));
            }
        }

        let paper = grid(&GridSpec::DEFAULT_GAMMAS, Criterion::Ece);
        assert_eq!(default_probe_gammas(&paper).unwrap(), [0.05, 0.75]);
        assert!(default_probe_gammas(&grid(&[0.0, 2.0], Criterion::Ece)).is_err());
        assert!(fit_focal_temperature_line(&toy(), &g, [1.0, 1.0]).is_err());
    }

    #[test]
    fn json_shape() {
        let fit = fit_temperature(&toy(), &grid(&[0.0], Criterion::Ece)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&fit).unwrap();
        for key in ["family", "gamma_ev", "temperature", "criterion", "criterion_value", "grid", "trace"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["family"], "temperature");
        let back: FitResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn empty_and_invalid_inputs() {
        let mut g = grid(&[0.0], Criterion::Ece);
        g.bins = 0;
        assert!(fit_temperature(&toy(), &g).is_err());
    }
}
