use ::image::RgbImage;

use super::{Channel, Descriptor, Patch, COLOR_BINS};

/// Per-pixel weights emphasising the vertical centre axis of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    height: usize,
    columns: Vec<f64>,
}

impl WeightMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn at(&self, x: u32, _y: u32) -> f64 {
        self.columns[x as usize]
    }
}

/// Default `sigma_frac` for [`build_weight_map`].
pub const WEIGHT_SIGMA_FRAC: f64 = 0.25;

/// `w(x, y) = exp(-(x - (w-1)/2)^2 / (2 (sigma_frac * w)^2))`, constant along y.
pub fn build_weight_map(h: usize, w: usize, sigma_frac: f64) -> WeightMap {
    assert!(h >= 1 && w >= 1, "weight map needs a non-empty shape");
    assert!(sigma_frac > 0.0, "sigma_frac must be positive");
    let axis = (w as f64 - 1.0) / 2.0;
    let sigma = sigma_frac * w as f64;
    let columns = (0..w)
        .map(|x| {
            let d = x as f64 - axis;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    WeightMap { height: h, columns }
}

/// Hexcone HSV with hue in degrees `[0, 360)` and saturation/value in `[0, 1]`.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB to CIELAB under the D65 white point.
pub fn rgb_to_lab(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    const XN: f64 = 0.950_47;
    const ZN: f64 = 1.088_83;
    let f = |t: f64| {
        const D: f64 = 6.0 / 29.0;
        if t > D * D * D {
            t.cbrt()
        } else {
            t / (3.0 * D * D) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / XN), f(y), f(z / ZN));
    (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

#[inline]
fn quantize(v: f64, lo: f64, hi: f64) -> u8 {
    let q = ((v - lo) / (hi - lo) * 4.0).floor();
    q.clamp(0.0, 3.0) as u8
}

/// Joint 4x4x4 HSV bin index.
pub fn hsv_bin(r: u8, g: u8, b: u8) -> u8 {
    let (h, s, v) = rgb_to_hsv(r, g, b);
    quantize(h, 0.0, 360.0) * 16 + quantize(s, 0.0, 1.0) * 4 + quantize(v, 0.0, 1.0)
}

/// Joint 4x4x4 CIELAB bin index; L over `[0, 100]`, a and b over `[-128, 127]`.
pub fn lab_bin(r: u8, g: u8, b: u8) -> u8 {
    let (l, a, bb) = rgb_to_lab(r, g, b);
    quantize(l, 0.0, 100.0) * 16 + quantize(a, -128.0, 127.0) * 4 + quantize(bb, -128.0, 127.0)
}

/// L1-normalized histogram of precomputed bin indices over a patch.
pub(super) fn binned_histogram(
    bins: &[u8],
    stride: u32,
    p: &Patch,
    weight: impl Fn(u32, u32) -> f64,
) -> [f64; COLOR_BINS] {
    let mut hist = [0.0; COLOR_BINS];
    for y in p.y..p.y + p.size {
        for x in p.x..p.x + p.size {
            hist[bins[(y * stride + x) as usize] as usize] += weight(x, y);
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    } else {
        hist.fill(1.0 / COLOR_BINS as f64);
    }
    hist
}

fn patch_bins(rgb: &RgbImage, p: &Patch, f: impl Fn(u8, u8, u8) -> u8) -> Vec<u8> {
    let w = rgb.width();
    let mut out = vec![0u8; (w * rgb.height()) as usize];
    for y in p.y..p.y + p.size {
        for x in p.x..p.x + p.size {
            let px = rgb.get_pixel(x, y);
            out[(y * w + x) as usize] = f(px[0], px[1], px[2]);
        }
    }
    out
}

/// Weighted HSV histogram of one patch.
pub fn whsv_descriptor(rgb: &RgbImage, p: &Patch, wm: &WeightMap) -> Descriptor {
    let bins = patch_bins(rgb, p, hsv_bin);
    Descriptor {
        values: binned_histogram(&bins, rgb.width(), p, |x, y| wm.at(x, y)).to_vec(),
        channel: Channel::Whsv,
        center: p.center(),
    }
}

/// CIELAB histogram of one patch.
pub fn lab_descriptor(rgb: &RgbImage, p: &Patch) -> Descriptor {
    let bins = patch_bins(rgb, p, lab_bin);
    Descriptor {
        values: binned_histogram(&bins, rgb.width(), p, |_, _| 1.0).to_vec(),
        channel: Channel::Lab,
        center: p.center(),
    }
}
