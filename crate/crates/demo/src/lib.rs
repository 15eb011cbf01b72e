//! Browser bindings for three small pieces of the pipeline: rendering a
//! synthetic pedestrian with its body-structure pyramid, smoothing
//! orientation scores, and bag slot selection.

use reid_core::eval::{camera_view, SynthPerson};
use reid_core::odboa::{select_slots, selection_pairs, Occupancy, Selection};
use reid_core::orientation::{smooth_scores, OrientationScores, SmoothingKernel, NUM_ORIENTATIONS};
use reid_core::pyramid::{build_pyramid, Part};
use reid_core::{CameraId, OrientationLabel, Seed};
use wasm_bindgen::prelude::*;

pub const WIDTH: u32 = reid_core::eval::SYNTH_WIDTH;
pub const HEIGHT: u32 = reid_core::eval::SYNTH_HEIGHT;

#[wasm_bindgen]
pub fn image_width() -> u32 {
    WIDTH
}

#[wasm_bindgen]
pub fn image_height() -> u32 {
    HEIGHT
}

/// RGBA pixels of synthetic person `person` seen from `orientation` (1..=8)
/// by `camera`. Returns `WIDTH * HEIGHT * 4` bytes.
#[wasm_bindgen]
pub fn render_person(person: u32, orientation: u8, camera: u32) -> Result<Vec<u8>, String> {
    let o = OrientationLabel::new(orientation as i64).map_err(|e| e.to_string())?;
    let seed = Seed(person as u64);
    let clean = SynthPerson::random(seed.derive(0)).render(o, seed.derive(1));
    let img = camera_view(&clean, CameraId(camera), seed.derive2(2, camera as u64));
    Ok(img.pixels().flat_map(|p| [p[0], p[1], p[2], 255]).collect())
}

/// Pyramid rows as `[level, y0, y1]` triples in part order.
#[wasm_bindgen]
pub fn pyramid_rows(height: u32) -> Result<Vec<u32>, String> {
    let p = build_pyramid(height, WIDTH).map_err(|e| e.to_string())?;
    Ok(Part::ALL
        .iter()
        .flat_map(|&part| {
            let r = p.region(part);
            [part.level() as u32, r.y0, r.y1]
        })
        .collect())
}

#[wasm_bindgen]
pub fn part_name(index: usize) -> String {
    Part::ALL.get(index).map_or("", |p| p.name()).to_owned()
}

/// Smoothed copy of eight raw orientation scores.
#[wasm_bindgen]
pub fn smooth(scores: Vec<f64>, prev: f64, center: f64, next: f64) -> Result<Vec<f64>, String> {
    let raw: [f64; NUM_ORIENTATIONS] =
        scores.try_into().map_err(|v: Vec<f64>| format!("expected {NUM_ORIENTATIONS} scores, got {}", v.len()))?;
    let kernel = SmoothingKernel::new(prev, center, next).map_err(|e| e.to_string())?;
    Ok(smooth_scores(&OrientationScores(raw), &kernel).0.to_vec())
}

/// Orientation pairs chosen for two bags given as occupancy bitmasks
/// (bit `i` set means orientation `i + 1` is present). The first byte is 1
/// when the random fallback was used, followed by `(probe, gallery)` pairs.
#[wasm_bindgen]
pub fn select(probe_mask: u8, gallery_mask: u8, seed: u32) -> Result<Vec<u8>, String> {
    let sel =
        select_slots(Occupancy(probe_mask), Occupancy(gallery_mask), Seed(seed as u64)).map_err(|e| e.to_string())?;
    let mut out = vec![u8::from(matches!(sel, Selection::Fallback { .. }))];
    out.extend(selection_pairs(&sel).into_iter().flat_map(|(p, g)| [p.value(), g.value()]));
    Ok(out)
}
