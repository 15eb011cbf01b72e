//! Eight quantized pedestrian orientations and their circular arithmetic,
//! plus the HOG + one-vs-all orientation estimator.

mod classifier;
mod smoothing;

pub use classifier::{
    accuracy, train_from_features, train_orientation, BinaryModel, Calibration, OrientationClassifier, SvmParams,
};
pub use smoothing::{smooth_scores, OrientationScores, SmoothingKernel};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_ORIENTATIONS: usize = 8;

/// One of the eight orientations, stored 1-based:
/// 1 R, 2 BR, 3 B, 4 BL, 5 L, 6 FL, 7 F, 8 FR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct OrientationLabel(u8);

const NAMES: [&str; 8] = ["R", "BR", "B", "BL", "L", "FL", "F", "FR"];

impl OrientationLabel {
    pub fn new(value: i64) -> Result<Self> {
        if (1..=8).contains(&value) {
            Ok(OrientationLabel(value as u8))
        } else {
            Err(Error::InvalidOrientation(value))
        }
    }

    pub fn all() -> impl Iterator<Item = OrientationLabel> {
        (1..=8u8).map(OrientationLabel)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based slot index.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < NUM_ORIENTATIONS, "orientation index {index} out of range");
        OrientationLabel(index as u8 + 1)
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    /// Label `k` steps around the circle from `self`.
    pub fn offset(self, k: i64) -> Self {
        orientation_mod(self.0 as i64, k)
    }

    /// Angle of the orientation in radians, counter-clockwise from R.
    pub fn angle(self) -> f64 {
        self.index() as f64 * std::f64::consts::FRAC_PI_4
    }
}

impl TryFrom<u8> for OrientationLabel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        OrientationLabel::new(v as i64)
    }
}

impl From<OrientationLabel> for u8 {
    fn from(o: OrientationLabel) -> u8 {
        o.0
    }
}

impl fmt::Display for OrientationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `((i + k) - 1) mod 8 + 1` with a non-negative modulo, so `(1, -1)` wraps to 8.
pub fn orientation_mod(i: i64, k: i64) -> OrientationLabel {
    OrientationLabel(((i + k - 1).rem_euclid(8) + 1) as u8)
}

/// Circular distance on the 8-cycle, in `0..=4`.
pub fn orientation_distance(a: OrientationLabel, b: OrientationLabel) -> u8 {
    let d = (a.0 as i16 - b.0 as i16).rem_euclid(8) as u8;
    d.min(8 - d)
}

/// Same or adjacent orientation.
pub fn is_similar_orientation(a: OrientationLabel, b: OrientationLabel) -> bool {
    orientation_distance(a, b) <= 1
}
