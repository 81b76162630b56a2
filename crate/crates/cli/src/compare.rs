//! Differences between the field dumps of two runs.

use std::path::Path;

use ebsrd_core::Error;

use crate::output::{read_field, FieldData};
use crate::CliError;

/// Per-component differences; the summary values are maxima over components.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub max_diff: Vec<f64>,
    /// Volume-weighted mean absolute difference, `sum kappa |du| / N`.
    pub l1_diff: Vec<f64>,
}

impl Comparison {
    pub fn max(&self) -> f64 {
        self.max_diff.iter().copied().fold(0.0, f64::max)
    }

    pub fn l1(&self) -> f64 {
        self.l1_diff.iter().copied().fold(0.0, f64::max)
    }

    /// One-line machine-readable report.
    pub fn report(&self) -> String {
        format!("MAXDIFF={:e},L1DIFF={:e}", self.max(), self.l1())
    }
}

pub fn compare_fields(a: &FieldData, b: &FieldData) -> Result<Comparison, CliError> {
    if a.ndim != b.ndim || a.cells != b.cells || a.values.len() != b.values.len() {
        return Err(Error::GridMismatch.into());
    }
    let n = a.kappa.len() as f64;
    let mut out = Comparison { max_diff: Vec::new(), l1_diff: Vec::new() };
    for (ua, ub) in a.values.iter().zip(&b.values) {
        let mut max = 0.0f64;
        let mut l1 = 0.0;
        for ((x, y), k) in ua.iter().zip(ub).zip(&a.kappa) {
            let d = (x - y).abs();
            max = max.max(d);
            l1 += k * d;
        }
        out.max_diff.push(max);
        out.l1_diff.push(l1 / n);
    }
    Ok(out)
}

/// Compare the `field.csv` dumps in two run directories.
pub fn compare_dirs(a: &Path, b: &Path) -> Result<Comparison, CliError> {
    compare_fields(&read_field(&a.join("field.csv"))?, &read_field(&b.join("field.csv"))?)
}
