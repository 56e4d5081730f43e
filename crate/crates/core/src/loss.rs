//! Cross-entropy, focal loss and its derivatives, the properized focal loss, and the Brier score.

use crate::error::{CalibError, Result};
use crate::focal::{check_loss_gamma, focal_calib_inverse_multiclass};
use crate::prob::{clamp_prob, ProbVector};

fn check_label(q: &ProbVector, label: usize) -> Result<()> {
    if label >= q.len() {
        return Err(CalibError::Domain(format!(
            "label {label} out of range for {} classes",
            q.len()
        )));
    }
    Ok(())
}

fn check_open_unit(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CalibError::Domain(format!("probability {q} outside (0, 1)")));
    }
    Ok(())
}

/// `-ln q_label`, with the probability clamped.
pub fn cross_entropy(q: &ProbVector, label: usize) -> Result<f64> {
    check_label(q, label)?;
    Ok(-clamp_prob(q.get(label)).ln())
}

/// Partial focal loss of the true class: `-(1 - p)^gamma ln p` at a clamped `p`.
#[inline]
pub(crate) fn focal_partial(p: f64, gamma: f64) -> f64 {
    let p = clamp_prob(p);
    if gamma == 0.0 {
        -p.ln()
    } else {
        -(1.0 - p).powf(gamma) * p.ln()
    }
}

/// `-(1 - q_label)^gamma ln q_label`.
pub fn focal_loss(q: &ProbVector, label: usize, gamma: f64) -> Result<f64> {
    check_label(q, label)?;
    check_loss_gamma(gamma)?;
    Ok(focal_partial(q.get(label), gamma))
}

#[inline]
pub(crate) fn focal_grad_unchecked(q: f64, gamma: f64) -> f64 {
    let q = clamp_prob(q);
    let one_minus = 1.0 - q;
    if gamma == 0.0 {
        return -1.0 / q;
    }
    gamma * one_minus.powf(gamma - 1.0) * q.ln() - one_minus.powf(gamma) / q
}

/// Derivative of `-(1 - q)^gamma ln q` with respect to `q`.
pub fn focal_loss_grad(q: f64, gamma: f64) -> Result<f64> {
    check_open_unit(q)?;
    check_loss_gamma(gamma)?;
    Ok(focal_grad_unchecked(q, gamma))
}

/// Second derivative of `-(1 - q)^gamma ln q`, written as a quadratic in gamma:
///
/// `-ln q (1-q)^(g-2) g^2 + ((2 (1-q)^(g-1)) / q + (1-q)^(g-2) ln q) g + (1-q)^g / q^2`
pub fn focal_loss_second_deriv(q: f64, gamma: f64) -> Result<f64> {
    check_open_unit(q)?;
    check_loss_gamma(gamma)?;
    let q = clamp_prob(q);
    let r = 1.0 - q;
    let lq = q.ln();
    let constant = r.powf(gamma) / (q * q);
    if gamma == 0.0 {
        return Ok(constant);
    }
    let r_gm1 = r.powf(gamma - 1.0);
    let r_gm2 = r.powf(gamma - 2.0);
    let quadratic = -lq * r_gm2 * gamma * gamma;
    let linear = (2.0 * r_gm1 / q + r_gm2 * lq) * gamma;
    Ok(quadratic + linear + constant)
}

/// Focal loss evaluated at the preimage of `q` under the focal map.
pub fn properized_focal_loss(q: &ProbVector, label: usize, gamma: f64) -> Result<f64> {
    check_label(q, label)?;
    check_loss_gamma(gamma)?;
    if gamma == 0.0 {
        return cross_entropy(q, label);
    }
    let pre = focal_calib_inverse_multiclass(q, gamma)?;
    Ok(focal_partial(pre.get(label), gamma))
}

/// Properized focal loss for every possible label, sharing one inversion.
pub fn properized_focal_losses(q: &ProbVector, gamma: f64) -> Result<Vec<f64>> {
    check_loss_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(q.as_slice().iter().map(|&p| -clamp_prob(p).ln()).collect());
    }
    let pre = focal_calib_inverse_multiclass(q, gamma)?;
    Ok(pre.as_slice().iter().map(|&p| focal_partial(p, gamma)).collect())
}

/// `sum_i (q_i - y_i)^2` against the one-hot target of `label`.
pub fn brier_score(q: &ProbVector, label: usize) -> Result<f64> {
    check_label(q, label)?;
    Ok(q
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let y = if i == label { 1.0 } else { 0.0 };
            (p - y) * (p - y)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::focal::focal_calib_multiclass;
    use approx::assert_abs_diff_eq;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn cross_entropy_examples() {
        let eps = crate::prob::EPS;
        assert!(cross_entropy(&pv(&[1.0 - eps, eps]), 0).unwrap() < 2e-12);
        assert_abs_diff_eq!(cross_entropy(&pv(&[0.8, 0.2]), 0).unwrap(), 0.223_143_551_314_209_8, epsilon = 1e-15);
        assert_abs_diff_eq!(cross_entropy(&pv(&[0.5, 0.5]), 1).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert!(matches!(cross_entropy(&pv(&[0.5, 0.5]), 2), Err(CalibError::Domain(_))));
    }

    #[test]
    fn focal_loss_examples() {
        assert_abs_diff_eq!(focal_loss(&pv(&[0.5, 0.5]), 0, 1.0).unwrap(), 0.5 * 2f64.ln(), epsilon = 1e-15);
        let q = pv(&[0.9, 0.1]);
        assert_abs_diff_eq!(focal_loss(&q, 0, 2.0).unwrap(), 0.01 * -(0.9f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(focal_loss(&q, 0, 2.0).unwrap(), 0.001_054, epsilon = 1e-6);
        for label in 0..2 {
            assert_eq!(focal_loss(&q, label, 0.0).unwrap(), cross_entropy(&q, label).unwrap());
        }
        assert!(matches!(focal_loss(&q, 0, -0.5), Err(CalibError::Parameter(_))));
    }

    #[test]
    fn grad_examples() {
        assert_abs_diff_eq!(focal_loss_grad(0.5, 0.0).unwrap(), -2.0, epsilon = 1e-15);
        assert!(focal_loss_grad(1.0 - 1e-9, 2.0).unwrap().abs() < 1e-8);
        let fd = central_diff(|x| focal_partial(x, 2.0), 0.3, 1e-6);
        let g = focal_loss_grad(0.3, 2.0).unwrap();
        assert!(((g - fd) / g).abs() < 1e-6, "{g} vs {fd}");
    }

    #[test]
    fn grad_matches_finite_differences_on_grid() {
        for &gamma in &[0.0, 0.5, 1.0, 2.0, 3.0, 5.0] {
            for i in 1..100 {
                let q = i as f64 / 100.0;
                let fd = central_diff(|x| focal_partial(x, gamma), q, 1e-6);
                let g = focal_loss_grad(q, gamma).unwrap();
                assert!(((g - fd) / g).abs() < 1e-6, "gamma {gamma} q {q}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn second_derivative_examples() {
        assert_abs_diff_eq!(focal_loss_second_deriv(0.5, 1.0).unwrap(), 6.0, epsilon = 1e-13);
        assert_abs_diff_eq!(focal_loss_second_deriv(0.5, 0.0).unwrap(), 4.0, epsilon = 1e-13);
        let fd = central_diff(|x| focal_grad_unchecked(x, 3.0), 0.2, 1e-6);
        let h = focal_loss_second_deriv(0.2, 3.0).unwrap();
        assert!(h > 0.0);
        assert!(((h - fd) / h).abs() < 1e-5, "{h} vs {fd}");
    }

    #[test]
    fn properized_reduces_to_cross_entropy() {
        let q = pv(&[0.6, 0.3, 0.1]);
        for label in 0..3 {
            assert_eq!(
                properized_focal_loss(&q, label, 0.0).unwrap(),
                cross_entropy(&q, label).unwrap()
            );
        }
    }

    #[test]
    fn properized_round_trip_identity() {
        let q = pv(&[0.62, 0.38]);
        let mapped = focal_calib_multiclass(&q, 2.0).unwrap();
        let l_star = properized_focal_loss(&mapped, 0, 2.0).unwrap();
        assert_abs_diff_eq!(l_star, focal_loss(&q, 0, 2.0).unwrap(), epsilon = 1e-8);
        let all = properized_focal_losses(&mapped, 2.0).unwrap();
        assert_abs_diff_eq!(all[0], l_star, epsilon = 1e-15);
    }

    #[test]
    fn brier_direct() {
        let q = pv(&[0.6, 0.3, 0.1]);
        assert_abs_diff_eq!(brier_score(&q, 0).unwrap(), 0.16 + 0.09 + 0.01, epsilon = 1e-15);
    }
}
