//! One-dimensional bracketing solvers.

use crate::error::{CalibError, Result};

const MAX_BISECTIONS: usize = 400;

/// Finds `x` in `[lo, hi]` with `f(x) = target` for a nondecreasing `f`.
///
/// Bisects until the bracket is narrower than `width` or stops shrinking in
/// floating point. Errors when the target lies outside `[f(lo), f(hi)]`.
pub fn bisect_increasing<F>(f: F, target: f64, mut lo: f64, mut hi: f64, width: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let f_lo = f(lo);
    let f_hi = f(hi);
    if !(f_lo <= target && target <= f_hi) {
        return Err(CalibError::Numeric(format!(
            "target {target} not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}"
        )));
    }
    if f_lo == target {
        return Ok(lo);
    }
    if f_hi == target {
        return Ok(hi);
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v.is_nan() {
            return Err(CalibError::Numeric(format!("NaN while bisecting at {mid}")));
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Same as [`bisect_increasing`] but saturates at the bracket ends instead of failing.
pub(crate) fn bisect_increasing_clamped<F>(f: F, target: f64, lo: f64, hi: f64, width: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if target <= f(lo) {
        return lo;
    }
    if target >= f(hi) {
        return hi;
    }
    bisect_increasing(f, target, lo, hi, width).unwrap_or(0.5 * (lo + hi))
}

/// Golden-section search for the minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section_min<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    0.5 * (lo + hi)
}
