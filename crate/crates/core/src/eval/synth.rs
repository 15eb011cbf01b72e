//! Seeded synthetic pedestrians whose appearance depends on orientation.
//!
//! Each identity has a front and a back colour for head, torso and legs.
//! A view at angle `a` mixes them with `t = (1 + cos(a - a_front)) / 2`, so
//! the front view shows only front colours, the back view only back colours
//! and side views an even mix. Side views also have a narrower silhouette
//! and a coloured accent on the visible flank. A camera applies a per-channel
//! gain and offset to the whole frame, then Gaussian pixel noise is added.

use ::image::{Rgb, RgbImage};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{CameraId, PersonId, PersonImage};
use crate::orientation::{OrientationLabel, NUM_ORIENTATIONS};
use crate::rng::Seed;

pub const SYNTH_HEIGHT: u32 = 128;
pub const SYNTH_WIDTH: u32 = 48;
pub const NOISE_SIGMA: f64 = 8.0;

/// Per-camera `(gain, offset)` per RGB channel; cameras beyond the table cycle.
const CAMERAS: [([f64; 3], [f64; 3]); 3] =
    [([1.0, 1.0, 1.0], [0.0, 0.0, 0.0]), ([0.85, 0.95, 1.1], [12.0, 0.0, -8.0]), ([1.1, 0.9, 0.9], [-6.0, 8.0, 10.0])];

// palette hues for clothing; identities draw from it so colours collide
const HUES: [f64; 10] = [0.0, 30.0, 55.0, 95.0, 140.0, 180.0, 210.0, 240.0, 280.0, 320.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub persons: usize,
    pub cameras: u32,
    pub orientations_per_cam: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { persons: 60, cameras: 2, orientations_per_cam: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPerson {
    pub head: [[f64; 3]; 2],
    pub torso: [[f64; 3]; 2],
    pub legs: [[f64; 3]; 2],
    pub accent: [f64; 3],
    /// Horizontal torso stripes `(period, colour)` on the front only.
    pub stripes: Option<(u32, [f64; 3])>,
    pub build: f64,
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
}

fn cloth<R: Rng>(rng: &mut R) -> [f64; 3] {
    let h = HUES[rng.random_range(0..HUES.len())] + rng.random_range(-8.0..8.0);
    hsv(h, rng.random_range(0.45..0.95), rng.random_range(0.35..0.95))
}

impl SynthPerson {
    pub fn random(seed: Seed) -> Self {
        let mut rng = seed.rng();
        let skin = hsv(rng.random_range(15.0..35.0), rng.random_range(0.3..0.6), rng.random_range(0.55..0.95));
        let hair = hsv(rng.random_range(0.0..45.0), rng.random_range(0.2..0.8), rng.random_range(0.08..0.5));
        let torso = [cloth(&mut rng), cloth(&mut rng)];
        let legs = [cloth(&mut rng), cloth(&mut rng)];
        let accent = cloth(&mut rng);
        let stripes = rng.random_bool(0.5).then(|| (rng.random_range(4..9), cloth(&mut rng)));
        SynthPerson { head: [skin, hair], torso, legs, accent, stripes, build: rng.random_range(0.85..1.15) }
    }

    /// Noise-free frame of this person seen from `o`.
    pub fn render(&self, o: OrientationLabel, jitter: Seed) -> RgbImage {
        let (h, w) = (SYNTH_HEIGHT as i32, SYNTH_WIDTH as i32);
        let mut rng = jitter.rng();
        // angle relative to the front view (label 7)
        let delta = o.angle() - OrientationLabel::new(7).expect("valid label").angle();
        let t = (1.0 + delta.cos()) / 2.0;
        let mix =
            |pair: &[[f64; 3]; 2]| -> [f64; 3] { std::array::from_fn(|c| t * pair[0][c] + (1.0 - t) * pair[1][c]) };
        let frontal = delta.cos().abs();
        let flank = delta.sin();

        let bg_level = rng.random_range(90.0..160.0);
        let bg_tilt = rng.random_range(-20.0..20.0);
        let dx = rng.random_range(-2..=2);
        let dy = rng.random_range(-2..=2);

        let cx = w / 2 + dx;
        let head_end = (h * 16 + 50) / 100 + dy;
        let torso_end = head_end + (h * 29 + 50) / 100;
        let half_torso = ((8.0 + 4.0 * frontal) * self.build).round() as i32;
        let half_legs = ((6.0 + 3.0 * frontal) * self.build).round() as i32;
        let head_r = 6.0 * self.build.sqrt();
        let head_c = ((head_end as f64) * 0.55, cx as f64);

        let head = mix(&self.head);
        let torso = mix(&self.torso);
        let legs = mix(&self.legs);
        let mut img = RgbImage::new(SYNTH_WIDTH, SYNTH_HEIGHT);
        for y in 0..h {
            for x in 0..w {
                let bg = bg_level + bg_tilt * (y as f64 / h as f64 - 0.5);
                let mut px = [bg, bg * 0.98, bg * 0.95];
                let (fy, fx) = (y as f64 + 0.5, x as f64 + 0.5);
                let in_head = ((fy - head_c.0) / (head_r * 1.25)).powi(2) + ((fx - head_c.1) / head_r).powi(2) <= 1.0;
                if in_head {
                    px = head;
                } else if y >= head_end && y < torso_end && (x - cx).abs() <= half_torso {
                    px = torso;
                    if let Some((period, colour)) = self.stripes {
                        // stripes fade out as the front turns away
                        if t > 0.5 && ((y - head_end) as u32 / period) % 2 == 1 {
                            px = std::array::from_fn(|c| (2.0 * t - 1.0) * colour[c] + (2.0 - 2.0 * t) * torso[c]);
                        }
                    }
                    let edge = x - cx;
                    if (flank > 0.3 && edge <= -half_torso + 2) || (flank < -0.3 && edge >= half_torso - 2) {
                        px = self.accent;
                    }
                } else if y >= torso_end && y < h - 2 && (x - cx).abs() <= half_legs {
                    let gap = frontal > 0.5 && (x - cx).abs() <= 1 && y > torso_end + 6;
                    if !gap {
                        px = legs;
                    }
                }
                img.put_pixel(x as u32, y as u32, Rgb(px.map(|v| v.clamp(0.0, 255.0).round() as u8)));
            }
        }
        img
    }
}

/// Applies camera `cam`'s illumination and adds Gaussian noise.
pub fn camera_view(clean: &RgbImage, cam: CameraId, noise: Seed) -> RgbImage {
    let (gain, offset) = CAMERAS[cam.0 as usize % CAMERAS.len()];
    let normal = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");
    let mut rng = noise.rng();
    let mut out = clean.clone();
    for p in out.pixels_mut() {
        for c in 0..3 {
            let v = gain[c] * p.0[c] as f64 + offset[c] + normal.sample(&mut rng);
            p.0[c] = v.clamp(0.0, 255.0).round() as u8;
        }
    }
    out
}

/// Renders `persons x cameras x orientations_per_cam` images, person-major.
pub fn synth_generate(seed: Seed, params: &SynthParams) -> Result<Vec<PersonImage>> {
    if params.persons < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 persons, got {}", params.persons)));
    }
    if params.cameras == 0 || params.orientations_per_cam == 0 || params.orientations_per_cam > NUM_ORIENTATIONS {
        return Err(Error::InvalidArgument("need at least one camera and 1..=8 orientations".into()));
    }
    let mut out = Vec::with_capacity(params.persons * params.cameras as usize * params.orientations_per_cam);
    for p in 0..params.persons {
        let pseed = seed.derive2(1, p as u64);
        let person = SynthPerson::random(pseed.derive(0));
        let id = PersonId(format!("s{p:04}"));
        for cam in 0..params.cameras {
            let mut rng = pseed.derive2(1, cam as u64).rng();
            let mut orients = index::sample(&mut rng, NUM_ORIENTATIONS, params.orientations_per_cam).into_vec();
            orients.sort_unstable();
            for oi in orients {
                let o = OrientationLabel::from_index(oi);
                let clean = person.render(o, pseed.derive2(2, oi as u64));
                let noisy = camera_view(&clean, CameraId(cam), pseed.derive2(3, (cam as u64) << 8 | oi as u64));
                out.push(PersonImage::new(noisy, id.clone(), CameraId(cam), Some(o))?);
            }
        }
    }
    Ok(out)
}
