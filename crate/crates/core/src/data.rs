//! Labeled logits: the in-memory dataset and its CSV form.

use crate::error::{CalibError, Result};
use crate::format::fmt_g17;
use crate::prob::{LogitVector, ProbVector};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

/// Rectangular table of logit rows with integer labels, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledLogits {
    n_classes: usize,
    logits: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledLogits {
    /// `logits` is row-major with `n_classes` entries per row.
    pub fn from_flat(n_classes: usize, logits: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if n_classes < 2 {
            return Err(CalibError::Ingestion(format!("need at least 2 classes, got {n_classes}")));
        }
        if labels.is_empty() {
            return Err(CalibError::Ingestion("dataset has no rows".into()));
        }
        if logits.len() != n_classes * labels.len() {
            return Err(CalibError::Ingestion(format!(
                "{} logits do not fill {} rows of width {n_classes}",
                logits.len(),
                labels.len()
            )));
        }
        for (i, row) in logits.chunks_exact(n_classes).enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(CalibError::Ingestion(format!("row {i} has a non-finite logit")));
            }
        }
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(CalibError::Ingestion(format!("row {i}: label {y} out of range for {n_classes} classes")));
        }
        Ok(Self { n_classes, logits, labels })
    }

    pub fn from_rows(rows: Vec<(LogitVector, usize)>) -> Result<Self> {
        let n = rows.first().map(|(z, _)| z.len()).unwrap_or(0);
        let mut logits = Vec::with_capacity(n * rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (i, (z, y)) in rows.into_iter().enumerate() {
            if z.len() != n {
                return Err(CalibError::Ingestion(format!("row {i} has width {}, expected {n}", z.len())));
            }
            logits.extend_from_slice(z.as_slice());
            labels.push(y);
        }
        Self::from_flat(n, logits, labels)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.logits[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.logits.chunks_exact(self.n_classes).zip(self.labels.iter().copied())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(CalibError::Domain(format!("invalid row range {start}..{end} of {}", self.len())));
        }
        Self::from_flat(
            self.n_classes,
            self.logits[start * self.n_classes..end * self.n_classes].to_vec(),
            self.labels[start..end].to_vec(),
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.n_classes).map(|j| format!("logit_{j}")).collect();
        writeln!(w, "{},label", header.join(","))?;
        for (row, y) in self.rows() {
            write_row(&mut w, row, y)?;
        }
        Ok(())
    }
}

fn write_row<W: Write>(w: &mut W, values: &[f64], label: usize) -> Result<()> {
    let mut line = String::with_capacity(values.len() * 24);
    for v in values {
        line.push_str(&fmt_g17(*v));
        line.push(',');
    }
    writeln!(w, "{line}{label}")?;
    Ok(())
}

/// Writes `prob_0,...,prob_{n-1},label` rows.
pub fn write_probs_csv<W: Write>(mut w: W, probs: &[ProbVector], labels: &[usize]) -> Result<()> {
    let n = probs.first().map(|p| p.len()).unwrap_or(0);
    let header: Vec<String> = (0..n).map(|j| format!("prob_{j}")).collect();
    writeln!(w, "{},label", header.join(","))?;
    for (p, &y) in probs.iter().zip(labels) {
        write_row(&mut w, p.as_slice(), y)?;
    }
    Ok(())
}

/// Reads a `prob_0,...,prob_{n-1},label` file as written by [`write_probs_csv`].
pub fn read_probs_csv<R: Read>(reader: R) -> Result<(Vec<ProbVector>, Vec<usize>)> {
    let (n, values, labels) = read_table(reader, "prob")?;
    let probs = values
        .chunks_exact(n)
        .enumerate()
        .map(|(i, row)| {
            ProbVector::new(row.to_vec()).map_err(|e| CalibError::Ingestion(format!("row {}: {e}", i + 2)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((probs, labels))
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<LabeledLogits> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(file)
}

/// Parses `logit_0,...,logit_{n-1},label` CSV; errors name the 1-based file line.
pub fn ingest_reader<R: Read>(reader: R) -> Result<LabeledLogits> {
    let (n, values, labels) = read_table(reader, "logit")?;
    LabeledLogits::from_flat(n, values, labels)
}

fn read_table<R: Read>(reader: R, prefix: &str) -> Result<(usize, Vec<f64>, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| CalibError::Ingestion(format!("line 1: {e}")))?,
        None => return Err(CalibError::Ingestion("line 1: missing header".into())),
    };
    let width = header.len();
    let n = width.saturating_sub(1);
    let header_ok = n >= 2
        && header.iter().take(n).enumerate().all(|(j, h)| h == format!("{prefix}_{j}"))
        && &header[n] == "label";
    if !header_ok {
        return Err(CalibError::Ingestion(format!(
            "line 1: header must be {prefix}_0,...,{prefix}_<n-1>,label with n >= 2"
        )));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| CalibError::Ingestion(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(CalibError::Ingestion(format!(
                "line {line}: expected {width} fields, found {}",
                rec.len()
            )));
        }
        for (j, field) in rec.iter().take(n).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| CalibError::Ingestion(format!("line {line}: column {j}: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(CalibError::Ingestion(format!("line {line}: column {j}: non-finite value `{field}`")));
            }
            values.push(v);
        }
        let label: usize = rec[n]
            .parse()
            .map_err(|_| CalibError::Ingestion(format!("line {line}: label `{}` is not a class index", &rec[n])))?;
        if label >= n {
            return Err(CalibError::Ingestion(format!(
                "line {line}: label {label} out of range for {n} classes"
            )));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(CalibError::Ingestion("file has a header but no data rows".into()));
    }
    Ok((n, values, labels))
}
