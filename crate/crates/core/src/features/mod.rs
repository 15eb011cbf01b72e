//! Dense patch grid and low-level descriptors.
//!
//! Every image is tiled with overlapping 8x8 patches on a stride of 4.
//! Each patch yields three descriptors: a spatially weighted HSV histogram,
//! a CIELAB histogram (both 4x4x4 joint bins) and a 128-D SIFT descriptor
//! over a 16x16 support centred on the patch.

mod color;
mod hog;
mod sift;

pub use color::{
    build_weight_map, hsv_bin, lab_bin, lab_descriptor, rgb_to_hsv, rgb_to_lab, whsv_descriptor, WeightMap,
    WEIGHT_SIGMA_FRAC,
};
pub use hog::{hog_descriptor, hog_of_plane, HogVector, HOG_HEIGHT, HOG_WIDTH};
pub use sift::{sift_at, sift_descriptor};

use ::image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayPlane, PersonImage};

pub const PATCH_SIZE: u32 = 8;
pub const PATCH_STRIDE: u32 = 4;
pub const COLOR_BINS: usize = 64;
pub const SIFT_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Whsv,
    Lab,
    Sift,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Whsv, Channel::Lab, Channel::Sift];

    pub fn dim(self) -> usize {
        match self {
            Channel::Whsv | Channel::Lab => COLOR_BINS,
            Channel::Sift => SIFT_DIM,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Whsv => "whsv",
            Channel::Lab => "lab",
            Channel::Sift => "sift",
        }
    }
}

/// An 8x8 window, addressed by its top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    pub x: u32,
    pub y: u32,
    pub size: u32,
}

impl Patch {
    /// Integer centre `(x + size/2, y + size/2)`.
    pub fn center(&self) -> (u32, u32) {
        (self.x + self.size / 2, self.y + self.size / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub channel: Channel,
    pub center: (u32, u32),
}

/// Row-major grid of fully contained patches.
pub fn extract_patch_grid(height: u32, width: u32, size: u32, stride: u32) -> Result<Vec<Patch>> {
    if height < size || width < size {
        return Err(Error::ImageTooSmall { height, width, min_height: size, min_width: size });
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("patch stride must be positive".into()));
    }
    let mut out = Vec::new();
    for y in (0..=height - size).step_by(stride as usize) {
        for x in (0..=width - size).step_by(stride as usize) {
            out.push(Patch { x, y, size });
        }
    }
    Ok(out)
}

/// All descriptors of one channel for one image, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub channel: Channel,
    pub dim: usize,
    pub centers: Vec<(u32, u32)>,
    pub data: Vec<f64>,
}

impl DescriptorSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&(u32, u32), &[f64])> {
        self.centers.iter().zip(self.data.chunks_exact(self.dim))
    }
}

/// Dense descriptors of every channel for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDescriptors {
    pub height: u32,
    pub width: u32,
    pub sets: [DescriptorSet; 3],
}

impl ImageDescriptors {
    pub fn channel(&self, c: Channel) -> &DescriptorSet {
        &self.sets[c.index()]
    }
}

/// Extracts the three dense descriptor channels on the standard patch grid.
pub fn extract_descriptors(img: &PersonImage, wm: &WeightMap) -> Result<ImageDescriptors> {
    extract_descriptors_rgb(&img.pixels, wm)
}

pub fn extract_descriptors_rgb(rgb: &RgbImage, wm: &WeightMap) -> Result<ImageDescriptors> {
    let (w, h) = rgb.dimensions();
    if wm.width() != w as usize || wm.height() != h as usize {
        return Err(Error::DimensionMismatch { expected: (w * h) as usize, got: wm.width() * wm.height() });
    }
    let patches = extract_patch_grid(h, w, PATCH_SIZE, PATCH_STRIDE)?;
    let hsv_bins: Vec<u8> = rgb.pixels().map(|p| hsv_bin(p[0], p[1], p[2])).collect();
    let lab_bins: Vec<u8> = rgb.pixels().map(|p| lab_bin(p[0], p[1], p[2])).collect();
    let gray = GrayPlane::from_rgb(rgb);

    let centers: Vec<(u32, u32)> = patches.iter().map(Patch::center).collect();
    let mut whsv = Vec::with_capacity(patches.len() * COLOR_BINS);
    let mut lab = Vec::with_capacity(patches.len() * COLOR_BINS);
    let mut sift = Vec::with_capacity(patches.len() * SIFT_DIM);
    for p in &patches {
        whsv.extend(color::binned_histogram(&hsv_bins, w, p, |x, y| wm.at(x, y)));
        lab.extend(color::binned_histogram(&lab_bins, w, p, |_, _| 1.0));
        sift.extend(sift_at(&gray, p.center()));
    }
    let set = |channel: Channel, data: Vec<f64>| DescriptorSet {
        channel,
        dim: channel.dim(),
        centers: centers.clone(),
        data,
    };
    Ok(ImageDescriptors {
        height: h,
        width: w,
        sets: [set(Channel::Whsv, whsv), set(Channel::Lab, lab), set(Channel::Sift, sift)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::CameraId;

    #[test]
    fn grid_counts() {
        assert_eq!(extract_patch_grid(128, 48, 8, 4).unwrap().len(), 31 * 11);
        assert_eq!(extract_patch_grid(8, 8, 8, 4).unwrap().len(), 1);
        assert_eq!(extract_patch_grid(12, 12, 8, 4).unwrap().len(), 4);
        assert!(extract_patch_grid(7, 20, 8, 4).is_err());
    }

    #[test]
    fn grid_is_row_major_and_contained() {
        let grid = extract_patch_grid(20, 16, 8, 4).unwrap();
        let coords: Vec<_> = grid.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(coords[..3], [(0, 0), (4, 0), (8, 0)]);
        assert!(grid.iter().all(|p| p.x + 8 <= 16 && p.y + 8 <= 20));
    }

    #[test]
    fn dense_descriptors_match_single_patch_functions() {
        let mut rgb = RgbImage::new(24, 32);
        for (x, y, p) in rgb.enumerate_pixels_mut() {
            *p = ::image::Rgb([(x * 10) as u8, (y * 7) as u8, ((x + y) * 3) as u8]);
        }
        let img = PersonImage::new(rgb, "p".into(), CameraId(0), None).unwrap();
        let wm = build_weight_map(32, 24, 0.25);
        let all = extract_descriptors(&img, &wm).unwrap();
        let grid = extract_patch_grid(32, 24, 8, 4).unwrap();
        assert_eq!(all.channel(Channel::Sift).len(), grid.len());
        for (i, p) in grid.iter().enumerate() {
            assert_eq!(all.channel(Channel::Whsv).row(i), &whsv_descriptor(&img.pixels, p, &wm).values[..]);
            assert_eq!(all.channel(Channel::Lab).row(i), &lab_descriptor(&img.pixels, p).values[..]);
            assert_eq!(all.channel(Channel::Sift).row(i), &sift_descriptor(&img, p.center()).values[..]);
        }
        let again = extract_descriptors(&img, &wm).unwrap();
        assert_eq!(all, again);
    }
}
