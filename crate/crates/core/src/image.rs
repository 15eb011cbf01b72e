//! Pedestrian image records.

use std::fmt;

use ::image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orientation::OrientationLabel;

pub const MIN_SIDE: u32 = 16;

/// Opaque identity key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub String);

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PersonId {
    fn from(s: &str) -> Self {
        PersonId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CameraId(pub u32);

#[derive(Debug, Clone)]
pub struct PersonImage {
    pub pixels: RgbImage,
    pub person: PersonId,
    pub camera: CameraId,
    pub orientation: Option<OrientationLabel>,
}

impl PersonImage {
    pub fn new(
        pixels: RgbImage,
        person: PersonId,
        camera: CameraId,
        orientation: Option<OrientationLabel>,
    ) -> Result<Self> {
        let (w, h) = pixels.dimensions();
        if h < MIN_SIDE || w < MIN_SIDE {
            return Err(Error::ImageTooSmall { height: h, width: w, min_height: MIN_SIDE, min_width: MIN_SIDE });
        }
        Ok(PersonImage { pixels, person, camera, orientation })
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }
}

/// Row-major luma plane in `f64`, used by the gradient descriptors.
#[derive(Debug, Clone)]
pub struct GrayPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayPlane {
    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).collect();
        GrayPlane { width: w as usize, height: h as usize, data }
    }

    /// Border-clamped pixel access.
    #[inline]
    pub fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Central-difference gradient with clamped borders.
    #[inline]
    pub fn gradient(&self, x: isize, y: isize) -> (f64, f64) {
        (self.at(x + 1, y) - self.at(x - 1, y), self.at(x, y + 1) - self.at(x, y - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_images() {
        let err = PersonImage::new(RgbImage::new(15, 40), "a".into(), CameraId(0), None);
        assert!(matches!(err, Err(Error::ImageTooSmall { .. })));
        assert!(PersonImage::new(RgbImage::new(16, 16), "a".into(), CameraId(0), None).is_ok());
    }
}
