//! Inclusive arithmetic grids.

/// Slack that keeps the upper end on the grid despite rounding in `(hi - lo) / step`.
const GRID_SLACK: f64 = 1e-9;

/// Values are snapped to 12 decimals so that e.g. `0.01 + 99 * 0.01` is exactly `1.0`.
pub(crate) fn snap(x: f64) -> f64 {
    let s = (x * 1e12).round() / 1e12;
    if s.is_finite() {
        s
    } else {
        x
    }
}

/// Number of points of `lo, lo + step, ...` not exceeding `hi`.
pub fn grid_len(lo: f64, hi: f64, step: f64) -> usize {
    if hi < lo {
        return 0;
    }
    ((hi - lo) / step + GRID_SLACK).floor() as usize + 1
}

/// `lo + i * step` for every `i` that stays within `hi`, both ends inclusive.
pub fn inclusive_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    (0..grid_len(lo, hi, step)).map(|i| snap(lo + i as f64 * step)).collect()
}
