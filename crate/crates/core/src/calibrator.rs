//! Calibrator parameters and the composed focal temperature scaling transform.

use crate::error::{CalibError, Result};
use crate::focal::{check_map_gamma, FocalTerms};
use crate::prob::{tempered_softmax_into, LogitVector, ProbVector, Temperature};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Temperature,
    Focal,
    FocalTemperature,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Temperature => "temperature",
            Family::Focal => "focal",
            Family::FocalTemperature => "focal-temperature",
        })
    }
}

impl FromStr for Family {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temperature" => Ok(Family::Temperature),
            "focal" => Ok(Family::Focal),
            "focal-temperature" => Ok(Family::FocalTemperature),
            other => Err(CalibError::Parameter(format!("unknown calibrator family `{other}`"))),
        }
    }
}

/// `(gamma_ev, T)` plus the family they were fitted as.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratorParams {
    pub family: Family,
    pub gamma_ev: f64,
    pub temperature: Temperature,
}

impl CalibratorParams {
    pub fn identity() -> Self {
        Self {
            family: Family::FocalTemperature,
            gamma_ev: 0.0,
            temperature: Temperature::ONE,
        }
    }

    pub fn temperature_only(t: Temperature) -> Self {
        Self {
            family: Family::Temperature,
            gamma_ev: 0.0,
            temperature: t,
        }
    }

    pub fn focal_only(gamma_ev: f64) -> Result<Self> {
        Self::new(Family::Focal, gamma_ev, Temperature::ONE)
    }

    pub fn focal_temperature(gamma_ev: f64, t: Temperature) -> Result<Self> {
        Self::new(Family::FocalTemperature, gamma_ev, t)
    }

    /// Checks the family constraints and the map-role gamma range.
    pub fn new(family: Family, gamma_ev: f64, temperature: Temperature) -> Result<Self> {
        check_map_gamma(gamma_ev)?;
        match family {
            Family::Temperature if gamma_ev != 0.0 => {
                return Err(CalibError::Parameter(format!(
                    "temperature family requires gamma_ev = 0, got {gamma_ev}"
                )))
            }
            Family::Focal if temperature.value() != 1.0 => {
                return Err(CalibError::Parameter(format!(
                    "focal family requires T = 1, got {}",
                    temperature.value()
                )))
            }
            _ => {}
        }
        Ok(Self {
            family,
            gamma_ev,
            temperature,
        })
    }
}

/// Reusable per-row evaluation state: tempered softmax, then the focal map.
///
/// Every path from logits to calibrated probabilities goes through this type,
/// so fitting, application and evaluation see identical floating-point values.
#[derive(Debug, Clone)]
pub(crate) struct RowKernel {
    q: Vec<f64>,
    terms: FocalTerms,
    terms_loaded: bool,
}

impl RowKernel {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            terms: FocalTerms::with_capacity(n),
            terms_loaded: false,
        }
    }

    /// Stage one: temperature-scaled softmax of `scores`.
    pub(crate) fn load(&mut self, scores: &[f64], temperature: f64) {
        tempered_softmax_into(scores, temperature, &mut self.q);
        self.terms_loaded = false;
    }

    /// Stage two: focal map with `gamma` applied to the loaded row.
    pub(crate) fn apply(&mut self, gamma: f64, out: &mut [f64]) {
        if gamma == 0.0 {
            out.copy_from_slice(&self.q);
            return;
        }
        if !self.terms_loaded {
            self.terms.load(&self.q);
            self.terms_loaded = true;
        }
        self.terms.apply(gamma, out);
    }
}

/// Temperature-scaled softmax followed by the focal calibration map.
///
/// Both stages are strictly increasing per coordinate, so the argmax of the
/// output equals the argmax of the logits.
pub fn focal_temperature_transform(logits: &LogitVector, params: &CalibratorParams) -> Result<ProbVector> {
    check_map_gamma(params.gamma_ev)?;
    if logits.len() < 2 {
        return Err(CalibError::Domain("need at least 2 logits".into()));
    }
    let mut kernel = RowKernel::new(logits.len());
    let mut out = vec![0.0; logits.len()];
    kernel.load(logits.as_slice(), params.temperature.value());
    kernel.apply(params.gamma_ev, &mut out);
    Ok(ProbVector::from_normalized(out))
}
