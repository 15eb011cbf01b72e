use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel weights in the order wHSV, LAB, SIFT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionWeights {
    pub whsv: f64,
    pub lab: f64,
    pub sift: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights { whsv: 2.0, lab: 1.0, sift: 1.0 }
    }
}

impl FusionWeights {
    pub fn new(whsv: f64, lab: f64, sift: f64) -> Result<Self> {
        let w = FusionWeights { whsv, lab, sift };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.as_array();
        if v.iter().any(|b| !b.is_finite() || *b < 0.0) || v.iter().all(|b| *b == 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fusion weights must be non-negative with at least one positive, got {v:?}"
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.whsv, self.lab, self.sift]
    }
}

/// Min-max normalization to `[0, 1]`. A constant row maps to zeros.
pub fn normalize_distances(row: &[f64]) -> Vec<f64> {
    let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; row.len()];
    }
    row.iter().map(|v| (v - lo) / span).collect()
}

/// Weighted sum of the three channel rows.
pub fn fuse_distances(rows: [&[f64]; 3], beta: &FusionWeights) -> Result<Vec<f64>> {
    let n = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
    }
    let b = beta.as_array();
    Ok((0..n).map(|i| b[0] * rows[0][i] + b[1] * rows[1][i] + b[2] * rows[2][i]).collect())
}
