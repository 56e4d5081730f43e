//! Seeded synthetic logits with a known calibration distortion.
//!
//! Latent scores `a ~ scale * N(0, I)` define `q = softmax(a)`. Labels are
//! drawn from `focal_map(q, gamma)`, and the observed logits are `T * a`.
//! Focal temperature scaling with `(gamma, T)` therefore recovers the true
//! class probabilities exactly.

use crate::data::LabeledLogits;
use crate::error::{CalibError, Result};
use crate::focal::{check_map_gamma, FocalTerms};
use crate::prob::tempered_softmax_into;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub n_classes: usize,
    /// Standard deviation of the latent scores.
    pub scale: f64,
    /// Focal-map gamma that turns the latent softmax into the true distribution.
    pub gamma: f64,
    /// Multiplier applied to the latent scores to form the observed logits.
    pub temperature: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Observed logits are the true logits: already calibrated.
    pub fn calibrated(rows: usize, n_classes: usize, scale: f64, seed: u64) -> Self {
        Self {
            rows,
            n_classes,
            scale,
            gamma: 0.0,
            temperature: 1.0,
            seed,
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<LabeledLogits> {
    if spec.rows == 0 || spec.n_classes < 2 {
        return Err(CalibError::Parameter("synthetic data needs rows >= 1 and n_classes >= 2".into()));
    }
    if !(spec.scale.is_finite() && spec.scale > 0.0 && spec.temperature.is_finite() && spec.temperature > 0.0) {
        return Err(CalibError::Parameter("synthetic scale and temperature must be positive".into()));
    }
    check_map_gamma(spec.gamma)?;
    let n = spec.n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut a = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut terms = FocalTerms::with_capacity(n);
    let mut logits = Vec::with_capacity(spec.rows * n);
    let mut labels = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        for x in a.iter_mut() {
            *x = spec.scale * rng.sample::<f64, _>(StandardNormal);
        }
        tempered_softmax_into(&a, 1.0, &mut q);
        let truth = if spec.gamma == 0.0 {
            &q
        } else {
            terms.load(&q);
            terms.apply(spec.gamma, &mut p);
            &p
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = n - 1;
        for (j, &pj) in truth.iter().enumerate() {
            acc += pj;
            if u < acc {
                label = j;
                break;
            }
        }
        labels.push(label);
        logits.extend(a.iter().map(|x| spec.temperature * x));
    }
    LabeledLogits::from_flat(n, logits, labels)
}
