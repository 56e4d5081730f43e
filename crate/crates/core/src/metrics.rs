//! Evaluation metrics: equal-mass ECE, NLL, error rate and reliability tables.
//!
//! Confidence is the top-label probability and correctness is whether the
//! argmax (lowest index on ties) equals the label. Equal-mass bins are formed
//! by sorting confidences ascending, ties broken by dataset order, and giving
//! bin `b` the sorted positions `[floor(b N / B), floor((b + 1) N / B))`.

use crate::error::{CalibError, Result};
use crate::format::fmt_g17;
use crate::prob::{clamp_prob, ProbVector};
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const DEFAULT_BINS: usize = 15;

/// Calibrated predictions with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    probs: Vec<ProbVector>,
    labels: Vec<usize>,
}

impl PredictionBatch {
    pub fn new(probs: Vec<ProbVector>, labels: Vec<usize>) -> Result<Self> {
        if probs.is_empty() {
            return Err(CalibError::Domain("empty prediction batch".into()));
        }
        if probs.len() != labels.len() {
            return Err(CalibError::Domain(format!(
                "{} predictions but {} labels",
                probs.len(),
                labels.len()
            )));
        }
        let n = probs[0].len();
        for (i, (p, &y)) in probs.iter().zip(&labels).enumerate() {
            if p.len() != n {
                return Err(CalibError::Domain(format!(
                    "prediction {i} has {} classes, expected {n}",
                    p.len()
                )));
            }
            if y >= n {
                return Err(CalibError::Domain(format!("label {y} of row {i} out of range")));
            }
        }
        Ok(Self { probs, labels })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.probs[0].len()
    }

    pub fn probs(&self) -> &[ProbVector] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn confidences_and_correctness(&self) -> (Vec<f64>, Vec<bool>) {
        self.probs
            .iter()
            .zip(&self.labels)
            .map(|(p, &y)| {
                let j = p.argmax();
                (p.get(j), j == y)
            })
            .unzip()
    }

    fn label_probs(&self) -> Vec<f64> {
        self.probs.iter().zip(&self.labels).map(|(p, &y)| p.get(y)).collect()
    }
}

/// One row of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRecord {
    pub bin_index: usize,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub abs_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinTable {
    pub rows: Vec<BinRecord>,
}

impl BinTable {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    /// `sum_b (n_b / N) |acc_b - conf_b|`.
    pub fn weighted_gap(&self) -> f64 {
        let total = self.total() as f64;
        self.rows
            .iter()
            .map(|r| (r.count as f64 / total) * r.abs_gap)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_index,count,mean_confidence,accuracy,abs_gap")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.bin_index,
                r.count,
                fmt_g17(r.mean_confidence),
                fmt_g17(r.accuracy),
                fmt_g17(r.abs_gap)
            )?;
        }
        Ok(())
    }
}

pub(crate) fn bin_table_from_scores(confidence: &[f64], correct: &[bool], n_bins: usize) -> Result<BinTable> {
    let n = confidence.len();
    if n == 0 {
        return Err(CalibError::Domain("cannot bin an empty batch".into()));
    }
    if n_bins == 0 {
        return Err(CalibError::Parameter("number of bins must be positive".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal confidences keep dataset order
    order.sort_by(|&a, &b| confidence[a].total_cmp(&confidence[b]));
    let mut rows = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let start = b * n / n_bins;
        let end = (b + 1) * n / n_bins;
        if start == end {
            continue;
        }
        let mut conf_sum = 0.0;
        let mut hits = 0usize;
        for &i in &order[start..end] {
            conf_sum += confidence[i];
            hits += correct[i] as usize;
        }
        let count = end - start;
        let mean_confidence = conf_sum / count as f64;
        let accuracy = hits as f64 / count as f64;
        rows.push(BinRecord {
            bin_index: b,
            count,
            mean_confidence,
            accuracy,
            abs_gap: (accuracy - mean_confidence).abs(),
        });
    }
    Ok(BinTable { rows })
}

pub(crate) fn ece_from_scores(confidence: &[f64], correct: &[bool], n_bins: usize) -> Result<f64> {
    Ok(bin_table_from_scores(confidence, correct, n_bins)?.weighted_gap())
}

pub(crate) fn nll_from_label_probs(label_probs: &[f64]) -> Result<f64> {
    if label_probs.is_empty() {
        return Err(CalibError::Domain("empty batch".into()));
    }
    let total: f64 = label_probs.iter().map(|&p| -clamp_prob(p).ln()).sum();
    Ok(total / label_probs.len() as f64)
}

/// Equal-mass top-label expected calibration error.
pub fn ece_equal_mass(batch: &PredictionBatch, n_bins: usize) -> Result<f64> {
    let (conf, correct) = batch.confidences_and_correctness();
    ece_from_scores(&conf, &correct, n_bins)
}

pub fn reliability_table(batch: &PredictionBatch, n_bins: usize) -> Result<BinTable> {
    let (conf, correct) = batch.confidences_and_correctness();
    bin_table_from_scores(&conf, &correct, n_bins)
}

/// Mean negative log-probability of the true class.
pub fn nll(batch: &PredictionBatch) -> Result<f64> {
    nll_from_label_probs(&batch.label_probs())
}

pub fn error_rate(batch: &PredictionBatch) -> Result<f64> {
    let wrong = batch
        .probs
        .iter()
        .zip(&batch.labels)
        .filter(|(p, &y)| p.argmax() != y)
        .count();
    Ok(wrong as f64 / batch.len() as f64)
}
