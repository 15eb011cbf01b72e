use std::f64::consts::PI;

use ::image::imageops::{self, FilterType};

use super::sift::normalize_clip;
use crate::image::{GrayPlane, PersonImage};

pub const HOG_HEIGHT: u32 = 128;
pub const HOG_WIDTH: u32 = 48;
const CELL: usize = 8;
const BINS: usize = 9;
const BLOCK: usize = 2;
const CLIP: f64 = 0.2;

/// Block-normalized HOG features.
#[derive(Debug, Clone, PartialEq)]
pub struct HogVector {
    pub values: Vec<f64>,
}

/// HOG of an image resized (bilinear) to 128x48: 9 unsigned bins, 8x8 cells,
/// 2x2-cell blocks at one-cell stride, L2-hys block normalization.
pub fn hog_descriptor(img: &PersonImage) -> HogVector {
    let rgb = if img.pixels.dimensions() == (HOG_WIDTH, HOG_HEIGHT) {
        GrayPlane::from_rgb(&img.pixels)
    } else {
        GrayPlane::from_rgb(&imageops::resize(&img.pixels, HOG_WIDTH, HOG_HEIGHT, FilterType::Triangle))
    };
    hog_of_plane(&rgb)
}

/// HOG of a plane whose sides are multiples of the cell size.
pub fn hog_of_plane(gray: &GrayPlane) -> HogVector {
    let cells_x = gray.width / CELL;
    let cells_y = gray.height / CELL;
    let mut cells = vec![[0.0f64; BINS]; cells_x * cells_y];
    let bin_width = PI / BINS as f64;
    for y in 0..cells_y * CELL {
        for x in 0..cells_x * CELL {
            let (gx, gy) = gray.gradient(x as isize, y as isize);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            let pos = theta / bin_width - 0.5;
            let b0 = pos.floor();
            let frac = pos - b0;
            let b0 = (b0 as isize).rem_euclid(BINS as isize) as usize;
            let b1 = (b0 + 1) % BINS;
            let cell = &mut cells[(y / CELL) * cells_x + x / CELL];
            cell[b0] += mag * (1.0 - frac);
            cell[b1] += mag * frac;
        }
    }

    let blocks_x = cells_x.saturating_sub(BLOCK - 1);
    let blocks_y = cells_y.saturating_sub(BLOCK - 1);
    let mut values = Vec::with_capacity(blocks_x * blocks_y * BLOCK * BLOCK * BINS);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let mut block = Vec::with_capacity(BLOCK * BLOCK * BINS);
            for r in 0..BLOCK {
                for c in 0..BLOCK {
                    block.extend_from_slice(&cells[(by + r) * cells_x + bx + c]);
                }
            }
            normalize_clip(&mut block, CLIP);
            values.extend(block);
        }
    }
    HogVector { values }
}
