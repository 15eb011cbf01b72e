use std::f64::consts::FRAC_PI_4;

use super::{Channel, Descriptor, SIFT_DIM};
use crate::image::{GrayPlane, PersonImage};

const SUPPORT: isize = 16;
const CELL: isize = 4;
const CELLS: usize = 4;
const BINS: usize = 8;
const CLIP: f64 = 0.2;

/// Dense SIFT descriptor at a patch-grid centre of `img`.
pub fn sift_descriptor(img: &PersonImage, center: (u32, u32)) -> Descriptor {
    let gray = GrayPlane::from_rgb(&img.pixels);
    Descriptor { values: sift_at(&gray, center).to_vec(), channel: Channel::Sift, center }
}

/// 4x4 cells of 8 orientation bins over the 16x16 support `[cx-8, cx+8) x [cy-8, cy+8)`.
///
/// Layout is `(cell_row * 4 + cell_col) * 8 + bin`, bin `k` centred on
/// `k * 45` degrees measured from +x towards +y (image rows grow downward).
pub fn sift_at(gray: &GrayPlane, center: (u32, u32)) -> [f64; SIFT_DIM] {
    let (cx, cy) = (center.0 as isize, center.1 as isize);
    let x0 = cx - SUPPORT / 2;
    let y0 = cy - SUPPORT / 2;
    // geometric centre of the support lies between pixels
    let (mx, my) = (cx as f64 - 0.5, cy as f64 - 0.5);
    let sigma = SUPPORT as f64 / 2.0;
    let mut hist = [0.0; SIFT_DIM];
    for dy in 0..SUPPORT {
        for dx in 0..SUPPORT {
            let (x, y) = (x0 + dx, y0 + dy);
            let (gx, gy) = gray.gradient(x, y);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let (ox, oy) = (x as f64 - mx, y as f64 - my);
            let weight = mag * (-(ox * ox + oy * oy) / (2.0 * sigma * sigma)).exp();
            let mut pos = gy.atan2(gx) / FRAC_PI_4;
            if pos < 0.0 {
                pos += BINS as f64;
            }
            let b0 = pos.floor();
            let frac = pos - b0;
            let b0 = (b0 as usize) % BINS;
            let b1 = (b0 + 1) % BINS;
            let cell = (dy / CELL) as usize * CELLS + (dx / CELL) as usize;
            hist[cell * BINS + b0] += weight * (1.0 - frac);
            hist[cell * BINS + b1] += weight * frac;
        }
    }
    normalize_clip(&mut hist, CLIP);
    hist
}

/// L2 normalize, clip at `clip`, renormalize. Zero vectors stay zero.
pub(super) fn normalize_clip(v: &mut [f64], clip: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    v.iter_mut().for_each(|x| *x = (*x / norm).min(clip));
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
