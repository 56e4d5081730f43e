//! Numerical scans of the map's structural properties: confidence raising,
//! properness of the properized focal loss, and convexity of focal loss.

use crate::error::{CalibError, Result};
use crate::focal::{check_loss_gamma, FocalTerms};
use crate::format::fmt_g17;
use crate::grid::inclusive_grid;
use crate::loss::{focal_grad_unchecked, focal_loss_second_deriv, properized_focal_losses};
use crate::prob::ProbVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Margins below `-VIOLATION_TOL` count as confidence-raising violations.
pub const VIOLATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEntry {
    pub n: usize,
    pub gamma: f64,
    pub samples: usize,
    /// Smallest `max(mapped) - max(input)` seen.
    pub min_margin: f64,
    pub violations: usize,
    /// Input with the largest drop, when any drop exceeds the tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub seed: u64,
    pub entries: Vec<ConfidenceEntry>,
}

impl ConfidenceReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,gamma,samples,min_margin,violations")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{},{}", e.n, fmt_g17(e.gamma), e.samples, fmt_g17(e.min_margin), e.violations)?;
        }
        Ok(())
    }
}

/// `max(mapped) - max(q)` for the focal map of `q`.
pub(crate) fn confidence_margin(q: &[f64], gamma: f64, terms: &mut FocalTerms, out: &mut [f64]) -> f64 {
    let before = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if gamma == 0.0 {
        return 0.0;
    }
    terms.load(q);
    terms.apply(gamma, out);
    out.iter().copied().fold(f64::NEG_INFINITY, f64::max) - before
}

/// Draws `samples` symmetric Dirichlet(1) points per `(n, gamma)` pair and
/// records how often the focal map lowers the top probability, keeping the
/// worst witness.
///
/// Each pair uses its own ChaCha stream of `seed`, so entries are independent
/// of the order of `dims` and `gammas`.
pub fn confidence_raising_census(dims: &[usize], gammas: &[f64], samples: usize, seed: u64) -> Result<ConfidenceReport> {
    if samples == 0 {
        return Err(CalibError::Domain("confidence scan needs at least one sample".into()));
    }
    let mut entries = Vec::new();
    for &n in dims {
        if n < 2 {
            return Err(CalibError::Domain(format!("confidence scan needs n >= 2, got {n}")));
        }
        for &gamma in gammas {
            check_loss_gamma(gamma)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((n as u64) << 32) ^ gamma.to_bits().rotate_left(17));
            let mut q = vec![0.0; n];
            let mut out = vec![0.0; n];
            let mut terms = FocalTerms::with_capacity(n);
            let mut min_margin = f64::INFINITY;
            let mut violations = 0;
            let mut witness = None;
            for _ in 0..samples {
                let mut sum = 0.0;
                for x in q.iter_mut() {
                    *x = rng.sample::<f64, _>(Exp1);
                    sum += *x;
                }
                for x in q.iter_mut() {
                    *x /= sum;
                }
                let m = confidence_margin(&q, gamma, &mut terms, &mut out);
                if m < -VIOLATION_TOL {
                    violations += 1;
                }
                if m < min_margin {
                    min_margin = m;
                    if m < -VIOLATION_TOL {
                        witness = Some(q.clone());
                    }
                }
            }
            entries.push(ConfidenceEntry {
                n,
                gamma,
                samples,
                min_margin,
                violations,
                witness,
            });
        }
    }
    Ok(ConfidenceReport { seed, entries })
}

/// [`confidence_raising_census`] that fails on the first configuration with a violation.
pub fn confidence_raising_scan(dims: &[usize], gammas: &[f64], samples: usize, seed: u64) -> Result<ConfidenceReport> {
    let report = confidence_raising_census(dims, gammas, samples, seed)?;
    if let Some(e) = report.entries.iter().find(|e| e.violations > 0) {
        return Err(CalibError::Verification(format!(
            "focal map with gamma {} lowered the top probability on {} of {} samples at n = {}; worst drop {} at {:?}",
            e.gamma,
            e.violations,
            e.samples,
            e.n,
            -e.min_margin,
            e.witness.as_deref().unwrap_or_default()
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub gammas: Vec<f64>,
    pub q_step: f64,
    pub points: usize,
    pub min_second_derivative: f64,
    pub max_relative_fd_error: f64,
}

/// Checks that the analytic second derivative of focal loss is positive and
/// agrees with central differences of the analytic gradient to `rel_tol`.
pub fn convexity_scan(gammas: &[f64], q_step: f64, rel_tol: f64) -> Result<ConvexityReport> {
    let qs = inclusive_grid(q_step, 1.0 - q_step / 2.0, q_step);
    let mut min_h = f64::INFINITY;
    let mut max_err: f64 = 0.0;
    for &gamma in gammas {
        check_loss_gamma(gamma)?;
        for &q in &qs {
            let h2 = focal_loss_second_deriv(q, gamma)?;
            let step = 1e-5 * q.min(1.0 - q);
            let fd = (focal_grad_unchecked(q + step, gamma) - focal_grad_unchecked(q - step, gamma)) / (2.0 * step);
            let rel = ((h2 - fd) / h2).abs();
            if !(h2 > 0.0) || !(rel <= rel_tol) {
                return Err(CalibError::Verification(format!(
                    "focal loss curvature check failed at gamma {gamma}, q {q}: analytic {h2}, finite difference {fd}"
                )));
            }
            min_h = min_h.min(h2);
            max_err = max_err.max(rel);
        }
    }
    Ok(ConvexityReport {
        gammas: gammas.to_vec(),
        q_step,
        points: qs.len() * gammas.len(),
        min_second_derivative: min_h,
        max_relative_fd_error: max_err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperEntry {
    pub truth: Vec<f64>,
    pub minimizer: Vec<f64>,
    pub linf_distance: f64,
    pub risk: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperReport {
    pub gamma: f64,
    pub coarse_step: f64,
    pub fine_step: f64,
    pub tolerance: f64,
    pub entries: Vec<ProperEntry>,
}

impl ProperReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "truth,minimizer,linf_distance,risk,passed")?;
        let join = |v: &[f64]| v.iter().map(|x| fmt_g17(*x)).collect::<Vec<_>>().join(" ");
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{}",
                join(&e.truth),
                join(&e.minimizer),
                fmt_g17(e.linf_distance),
                fmt_g17(e.risk),
                e.passed
            )?;
        }
        Ok(())
    }
}

/// `count` Dirichlet(1) draws on the `n`-simplex, redrawn until every
/// coordinate is at least `min_coord`.
pub fn random_interior_truths(n: usize, count: usize, min_coord: f64, seed: u64) -> Result<Vec<ProbVector>> {
    if n < 2 || !(min_coord >= 0.0 && min_coord * (n as f64) < 1.0) {
        return Err(CalibError::Domain(format!("no interior truths with n {n} and floor {min_coord}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut p: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        if p.iter().all(|&x| x >= min_coord) {
            out.push(ProbVector::new(p)?);
        }
    }
    Ok(out)
}

/// Expected properized focal loss of prediction `q` under truth `p`.
pub fn properized_risk(p: &[f64], q: &ProbVector, gamma: f64) -> Result<f64> {
    let losses = properized_focal_losses(q, gamma)?;
    Ok(p.iter().zip(&losses).map(|(a, b)| a * b).sum())
}

/// Interior lattice points `k * step` of the simplex (n = 2 or 3) whose
/// leading coordinates lie within `radius` lattice steps of `center`.
fn lattice(n: usize, k_total: i64, center: &[i64], radius: i64) -> Vec<Vec<i64>> {
    let lo = |c: i64| (c - radius).max(1);
    let hi = |c: i64| (c + radius).min(k_total - 1);
    let mut pts = Vec::new();
    if n == 2 {
        for i in lo(center[0])..=hi(center[0]) {
            pts.push(vec![i, k_total - i]);
        }
    } else {
        for i in lo(center[0])..=hi(center[0]) {
            for j in lo(center[1])..=hi(center[1]) {
                let l = k_total - i - j;
                if l >= 1 {
                    pts.push(vec![i, j, l]);
                }
            }
        }
    }
    pts
}

fn best_on_lattice(p: &[f64], gamma: f64, step: f64, center: &[i64], radius: i64) -> Result<(Vec<f64>, f64)> {
    let k_total = (1.0 / step).round() as i64;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for pt in lattice(p.len(), k_total, center, radius) {
        let q: Vec<f64> = pt.iter().map(|&k| k as f64 / k_total as f64).collect();
        let risk = properized_risk(p, &ProbVector::from_normalized(q.clone()), gamma)?;
        if best.as_ref().is_none_or(|b| risk < b.1) {
            best = Some((q, risk));
        }
    }
    best.ok_or_else(|| CalibError::Domain(format!("no interior simplex points at step {step}")))
}

/// Grid-minimizes the conditional risk of the properized focal loss for each
/// truth and checks the minimizer lies within `2 * fine_step` (L-infinity).
///
/// A full scan at `coarse_step` is refined by a full scan at `fine_step` over
/// a window of two coarse steps around the coarse winner. Both steps must
/// divide 1.
pub fn properness_scan(truths: &[ProbVector], gamma: f64, coarse_step: f64, fine_step: f64) -> Result<ProperReport> {
    check_loss_gamma(gamma)?;
    for step in [coarse_step, fine_step] {
        let k = 1.0 / step;
        if !(step > 0.0 && step < 0.5 && (k - k.round()).abs() < 1e-9) {
            return Err(CalibError::Domain(format!("simplex step {step} must divide 1")));
        }
    }
    let tolerance = 2.0 * fine_step;
    let mut entries = Vec::new();
    for p in truths {
        let n = p.len();
        if !(n == 2 || n == 3) {
            return Err(CalibError::Domain(format!("properness scan supports n = 2 or 3, got {n}")));
        }
        if p.as_slice().iter().any(|&x| x <= 0.0) {
            return Err(CalibError::Domain(format!("truth {:?} is not in the simplex interior", p.as_slice())));
        }
        let ps = p.as_slice();
        let k_coarse = (1.0 / coarse_step).round() as i64;
        let whole = vec![k_coarse / 2; n];
        let (coarse, _) = best_on_lattice(ps, gamma, coarse_step, &whole, k_coarse)?;
        let ratio = (coarse_step / fine_step).round() as i64;
        let k_fine = (1.0 / fine_step).round() as i64;
        let center: Vec<i64> = coarse.iter().map(|&x| (x * k_fine as f64).round() as i64).collect();
        let (minimizer, risk) = best_on_lattice(ps, gamma, fine_step, &center, 2 * ratio)?;
        let linf_distance = minimizer.iter().zip(ps).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        entries.push(ProperEntry {
            truth: ps.to_vec(),
            minimizer,
            linf_distance,
            risk,
            passed: linf_distance <= tolerance + 1e-12,
        });
    }
    let report = ProperReport {
        gamma,
        coarse_step,
        fine_step,
        tolerance,
        entries,
    };
    if let Some(bad) = report.entries.iter().find(|e| !e.passed) {
        return Err(CalibError::Verification(format!(
            "risk minimizer {:?} is {} from truth {:?} at gamma {gamma}",
            bad.minimizer, bad.linf_distance, bad.truth
        )));
    }
    Ok(report)
}
