//! Body-structure pyramid: eight vertical parts over three levels.
//!
//! Level 1 is the whole body. Level 2 splits it into head, torso and legs at
//! 16% / 29% / 55% of the height. Level 3 halves torso and legs; its head
//! strip is the level-2 head region itself, so the pyramid has eight parts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_PARTS: usize = 8;

/// Canonical part order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Whole,
    Head,
    Torso,
    Legs,
    TorsoUpper,
    TorsoLower,
    LegsUpper,
    LegsLower,
}

impl Part {
    pub const ALL: [Part; NUM_PARTS] = [
        Part::Whole,
        Part::Head,
        Part::Torso,
        Part::Legs,
        Part::TorsoUpper,
        Part::TorsoLower,
        Part::LegsUpper,
        Part::LegsLower,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn level(self) -> u8 {
        match self {
            Part::Whole => 1,
            Part::Head | Part::Torso | Part::Legs => 2,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Part::Whole => "whole",
            Part::Head => "head",
            Part::Torso => "torso",
            Part::Legs => "legs",
            Part::TorsoUpper => "torso-upper",
            Part::TorsoLower => "torso-lower",
            Part::LegsUpper => "legs-upper",
            Part::LegsLower => "legs-lower",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartRegion {
    pub part: Part,
    /// Half-open row range `[y0, y1)`.
    pub y0: u32,
    pub y1: u32,
}

impl PartRegion {
    pub fn contains(&self, y: u32) -> bool {
        self.y0 <= y && y < self.y1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyStructurePyramid {
    pub height: u32,
    pub width: u32,
    pub parts: [PartRegion; NUM_PARTS],
}

impl BodyStructurePyramid {
    pub fn region(&self, part: Part) -> &PartRegion {
        &self.parts[part.index()]
    }

    /// The regions tiling `[0, H)` at a level; level 3 reuses the head.
    pub fn level(&self, level: u8) -> Vec<&PartRegion> {
        let parts: &[Part] = match level {
            1 => &[Part::Whole],
            2 => &[Part::Head, Part::Torso, Part::Legs],
            3 => &[Part::Head, Part::TorsoUpper, Part::TorsoLower, Part::LegsUpper, Part::LegsLower],
            _ => &[],
        };
        parts.iter().map(|p| self.region(*p)).collect()
    }

    /// One part per level whose row range holds `y`, in level order.
    pub fn assign_row(&self, y: u32) -> [Part; 3] {
        let pick = |candidates: &[Part]| {
            *candidates.iter().find(|p| self.region(**p).contains(y)).unwrap_or(candidates.last().expect("non-empty"))
        };
        let l2 = pick(&[Part::Head, Part::Torso, Part::Legs]);
        let l3 = match l2 {
            Part::Head => Part::Head,
            Part::Torso => pick(&[Part::TorsoUpper, Part::TorsoLower]),
            _ => pick(&[Part::LegsUpper, Part::LegsLower]),
        };
        [Part::Whole, l2, l3]
    }

    /// Part membership of a patch by its centre row.
    pub fn assign_patch(&self, center: (u32, u32)) -> [Part; 3] {
        self.assign_row(center.1)
    }

    /// Distinct parts containing a patch centre (two for head patches, else three).
    pub fn member_parts(&self, center: (u32, u32)) -> impl Iterator<Item = Part> {
        let [a, b, c] = self.assign_patch(center);
        std::iter::once(a).chain(std::iter::once(b)).chain((c != b).then_some(c))
    }
}

/// Builds the pyramid for an `h x w` image.
pub fn build_pyramid(h: u32, w: u32) -> Result<BodyStructurePyramid> {
    if h < 8 {
        return Err(Error::HeightTooSmall(h));
    }
    // round-half-up in integer arithmetic
    let head_h = (16 * h + 50) / 100;
    let torso_h = (29 * h + 50) / 100;
    if head_h == 0 || torso_h < 2 || head_h + torso_h + 2 > h {
        return Err(Error::HeightTooSmall(h));
    }
    let legs_h = h - head_h - torso_h;
    let torso0 = head_h;
    let legs0 = head_h + torso_h;
    let torso_mid = torso0 + torso_h / 2;
    let legs_mid = legs0 + legs_h / 2;
    let r = |part, y0, y1| PartRegion { part, y0, y1 };
    Ok(BodyStructurePyramid {
        height: h,
        width: w,
        parts: [
            r(Part::Whole, 0, h),
            r(Part::Head, 0, head_h),
            r(Part::Torso, torso0, legs0),
            r(Part::Legs, legs0, h),
            r(Part::TorsoUpper, torso0, torso_mid),
            r(Part::TorsoLower, torso_mid, legs0),
            r(Part::LegsUpper, legs0, legs_mid),
            r(Part::LegsLower, legs_mid, h),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_patch_grid, PATCH_SIZE, PATCH_STRIDE};

    fn range(p: &BodyStructurePyramid, part: Part) -> (u32, u32) {
        let r = p.region(part);
        (r.y0, r.y1)
    }

    #[test]
    fn h128_layout() {
        let p = build_pyramid(128, 48).unwrap();
        assert_eq!(range(&p, Part::Head), (0, 20));
        assert_eq!(range(&p, Part::Torso), (20, 57));
        assert_eq!(range(&p, Part::Legs), (57, 128));
        assert_eq!(range(&p, Part::TorsoUpper), (20, 38));
        assert_eq!(range(&p, Part::TorsoLower), (38, 57));
        assert_eq!(range(&p, Part::LegsUpper), (57, 92));
        assert_eq!(range(&p, Part::LegsLower), (92, 128));
    }

    #[test]
    fn h100_exact_percentages() {
        let p = build_pyramid(100, 40).unwrap();
        assert_eq!(p.region(Part::Head).height(), 16);
        assert_eq!(p.region(Part::Torso).height(), 29);
        assert_eq!(p.region(Part::Legs).height(), 55);
    }

    #[test]
    fn assignment_examples() {
        let p = build_pyramid(128, 48).unwrap();
        assert_eq!(p.assign_patch((4, 0)), [Part::Whole, Part::Head, Part::Head]);
        assert_eq!(p.assign_patch((4, 30)), [Part::Whole, Part::Torso, Part::TorsoUpper]);
        assert_eq!(p.assign_patch((4, 100)), [Part::Whole, Part::Legs, Part::LegsLower]);
        assert_eq!(p.member_parts((4, 0)).count(), 2);
        assert_eq!(p.member_parts((4, 100)).count(), 3);
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(build_pyramid(7, 48).is_err());
        assert!(build_pyramid(8, 8).is_ok());
    }

    #[test]
    fn levels_partition_every_height() {
        for h in 8..=512 {
            let p = build_pyramid(h, 48).unwrap();
            for level in 1..=3 {
                let mut regions = p.level(level);
                regions.sort_by_key(|r| r.y0);
                assert_eq!(regions[0].y0, 0);
                assert_eq!(regions.last().unwrap().y1, h);
                for pair in regions.windows(2) {
                    assert_eq!(pair[0].y1, pair[1].y0, "h={h} level={level}");
                }
                assert!(regions.iter().all(|r| r.height() > 0));
            }
            let l2: u32 = p.level(2).iter().map(|r| r.height()).sum();
            assert_eq!(l2, h);
            for y in 0..h {
                let [a, b, c] = p.assign_row(y);
                assert!(p.region(a).contains(y) && p.region(b).contains(y) && p.region(c).contains(y));
            }
        }
    }

    #[test]
    fn every_part_holds_a_patch_centre_from_32_rows() {
        for h in 32..=256 {
            let p = build_pyramid(h, 48).unwrap();
            let grid = extract_patch_grid(h, 48, PATCH_SIZE, PATCH_STRIDE).unwrap();
            for part in Part::ALL {
                assert!(
                    grid.iter().any(|g| p.region(part).contains(g.center().1)),
                    "h={h} part {} is empty",
                    part.name()
                );
            }
        }
    }
}
