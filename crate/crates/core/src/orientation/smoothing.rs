use serde::{Deserialize, Serialize};

use super::{OrientationLabel, NUM_ORIENTATIONS};
use crate::error::{Error, Result};

/// Per-orientation probabilities, indexed by zero-based slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationScores(pub [f64; NUM_ORIENTATIONS]);

impl OrientationScores {
    /// Highest-scoring label; ties go to the lowest label.
    pub fn argmax(&self) -> OrientationLabel {
        let mut best = 0;
        for i in 1..NUM_ORIENTATIONS {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        OrientationLabel::from_index(best)
    }
}

/// Weights for offsets -1, 0, +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingKernel {
    pub prev: f64,
    pub center: f64,
    pub next: f64,
}

impl SmoothingKernel {
    pub fn new(prev: f64, center: f64, next: f64) -> Result<Self> {
        let k = SmoothingKernel { prev, center, next };
        let sum = prev + center + next;
        if [prev, center, next].iter().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "smoothing weights must be non-negative and sum to 1, got ({prev}, {center}, {next})"
            )));
        }
        Ok(k)
    }

    pub fn identity() -> Self {
        SmoothingKernel { prev: 0.0, center: 1.0, next: 0.0 }
    }
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        SmoothingKernel { prev: 0.25, center: 0.5, next: 0.25 }
    }
}

/// Circular convolution of the scores with a three-tap kernel. All outputs
/// are computed from the unsmoothed input.
pub fn smooth_scores(psi: &OrientationScores, w: &SmoothingKernel) -> OrientationScores {
    let mut out = [0.0; NUM_ORIENTATIONS];
    for label in OrientationLabel::all() {
        let at = |k: i64| psi.0[label.offset(k).index()];
        out[label.index()] = w.prev * at(-1) + w.center * at(0) + w.next * at(1);
    }
    OrientationScores(out)
}
