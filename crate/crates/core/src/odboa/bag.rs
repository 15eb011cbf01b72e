use serde::{Deserialize, Serialize};

use crate::encoding::{l2_normalize, Signature};
use crate::error::{Error, Result};
use crate::image::{CameraId, PersonId};
use crate::orientation::{OrientationLabel, NUM_ORIENTATIONS};

/// Bit set over the eight orientation slots; bit `i` is label `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Occupancy(pub u8);

impl Occupancy {
    pub fn contains(self, o: OrientationLabel) -> bool {
        self.0 & (1 << o.index()) != 0
    }

    pub fn insert(&mut self, o: OrientationLabel) {
        self.0 |= 1 << o.index();
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Occupied labels in ascending order.
    pub fn labels(self) -> Vec<OrientationLabel> {
        OrientationLabel::all().filter(|&o| self.contains(o)).collect()
    }

    pub fn from_labels(labels: impl IntoIterator<Item = OrientationLabel>) -> Self {
        let mut m = Occupancy(0);
        labels.into_iter().for_each(|o| m.insert(o));
        m
    }
}

/// One orientation slot: unit-norm features and the raw pooled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagSlot {
    pub channels: [Vec<f64>; 3],
    pub pooled: [Vec<f64>; 3],
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceBag {
    pub person: PersonId,
    pub camera: CameraId,
    pub slots: [Option<BagSlot>; NUM_ORIENTATIONS],
}

impl AppearanceBag {
    pub fn slot(&self, o: OrientationLabel) -> Option<&BagSlot> {
        self.slots[o.index()].as_ref()
    }

    pub fn occupancy(&self) -> Occupancy {
        Occupancy::from_labels(OrientationLabel::all().filter(|o| self.slots[o.index()].is_some()))
    }

    /// Number of occupied orientations.
    pub fn num(&self) -> usize {
        self.occupancy().count()
    }

    pub fn is_empty(&self) -> bool {
        self.num() == 0
    }

    pub fn selected(&self, mask: Occupancy) -> Vec<&BagSlot> {
        mask.labels().into_iter().filter_map(|o| self.slot(o)).collect()
    }
}

fn elementwise_max(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        if *b > *a {
            *a = *b;
        }
    }
}

/// Groups signatures of one person and camera into orientation slots.
pub fn build_bag(signatures: &[Signature]) -> Result<AppearanceBag> {
    let first = signatures.first().ok_or(Error::EmptyBag)?;
    let (person, camera) = (&first.meta.person, first.meta.camera);
    let mut slots: [Option<BagSlot>; NUM_ORIENTATIONS] = Default::default();
    for s in signatures {
        if &s.meta.person != person || s.meta.camera != camera {
            return Err(Error::MixedIdentity);
        }
        let o = s.meta.orientation.ok_or(Error::InvalidOrientation(0))?;
        match &mut slots[o.index()] {
            Some(slot) => {
                for c in 0..3 {
                    elementwise_max(&mut slot.channels[c], &s.channels[c]);
                    elementwise_max(&mut slot.pooled[c], &s.pooled[c]);
                }
                slot.frames += 1;
            }
            empty => {
                *empty = Some(BagSlot { channels: s.channels.clone(), pooled: s.pooled.clone(), frames: 1 });
            }
        }
    }
    for slot in slots.iter_mut().flatten() {
        if slot.frames > 1 {
            for c in 0..3 {
                slot.channels[c] = l2_normalize(&slot.channels[c]);
            }
        }
    }
    Ok(AppearanceBag { person: person.clone(), camera, slots })
}

/// Per-channel elementwise max of the selected slots, re-normalized.
pub fn pool_selection(slots: &[&BagSlot]) -> Result<[Vec<f64>; 3]> {
    pool_with(slots, |s| &s.channels)
}

/// Pools the raw features; equal to encoding the union of the slots' descriptors.
pub(crate) fn pool_selection_raw(slots: &[&BagSlot]) -> Result<[Vec<f64>; 3]> {
    pool_with(slots, |s| &s.pooled)
}

fn pool_with(slots: &[&BagSlot], field: impl Fn(&BagSlot) -> &[Vec<f64>; 3]) -> Result<[Vec<f64>; 3]> {
    let (first, rest) = slots.split_first().ok_or(Error::EmptySelection)?;
    let mut out = field(first).clone();
    for s in rest {
        for c in 0..3 {
            elementwise_max(&mut out[c], &field(s)[c]);
        }
    }
    Ok(out.map(|v| l2_normalize(&v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::SignatureMeta;
    use crate::rng::Seed;
    use rand::Rng;

    pub(crate) fn signature(person: &str, cam: u32, o: u8, seed: u64) -> Signature {
        let mut rng = Seed(seed).rng();
        let pooled = [(); 3].map(|_| (0..16).map(|_| rng.random_range(-0.1..1.0)).collect::<Vec<f64>>());
        Signature::from_pooled(
            SignatureMeta {
                person: PersonId(person.into()),
                camera: CameraId(cam),
                orientation: Some(OrientationLabel::new(o as i64).unwrap()),
            },
            pooled,
        )
    }

    #[test]
    fn single_frames_are_kept_as_is() {
        let sigs: Vec<_> = (1..=8).map(|o| signature("a", 0, o, o as u64)).collect();
        let bag = build_bag(&sigs).unwrap();
        assert_eq!(bag.num(), 8);
        for s in &sigs {
            assert_eq!(bag.slot(s.meta.orientation.unwrap()).unwrap().channels, s.channels);
        }
    }

    #[test]
    fn duplicate_frames_are_idempotent() {
        let s = signature("a", 0, 3, 1);
        let bag = build_bag(&[s.clone(), s.clone()]).unwrap();
        let slot = bag.slot(OrientationLabel::new(3).unwrap()).unwrap();
        for (a, b) in slot.channels[0].iter().zip(&s.channels[0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(bag.num(), 1);
    }

    #[test]
    fn num_counts_orientations() {
        let sigs =
            vec![signature("a", 1, 1, 1), signature("a", 1, 1, 2), signature("a", 1, 4, 3), signature("a", 1, 7, 4)];
        let bag = build_bag(&sigs).unwrap();
        assert_eq!(bag.num(), 3);
        assert_eq!(bag.occupancy(), Occupancy(0b0100_1001));
        let norm: f64 = bag.slot(OrientationLabel::new(1).unwrap()).unwrap().channels[2].iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bag_errors() {
        assert!(matches!(build_bag(&[]), Err(Error::EmptyBag)));
        assert!(matches!(build_bag(&[signature("a", 0, 1, 1), signature("b", 0, 2, 2)]), Err(Error::MixedIdentity)));
        assert!(matches!(build_bag(&[signature("a", 0, 1, 1), signature("a", 1, 2, 2)]), Err(Error::MixedIdentity)));
        let mut s = signature("a", 0, 1, 1);
        s.meta.orientation = None;
        assert!(build_bag(&[s]).is_err());
    }

    #[test]
    fn pooling_selection_properties() {
        let sigs: Vec<_> = [1, 2, 5].iter().map(|&o| signature("a", 0, o, o as u64 + 10)).collect();
        let bag = build_bag(&sigs).unwrap();
        let slots = bag.selected(bag.occupancy());
        assert_eq!(pool_selection(&slots[..1]).unwrap(), slots[0].channels);
        let mut rev = slots.clone();
        rev.reverse();
        assert_eq!(pool_selection(&slots).unwrap(), pool_selection(&rev).unwrap());
        assert!(matches!(pool_selection(&[]), Err(Error::EmptySelection)));
        // before renormalization the pooled vector dominates every input
        let mut m = slots[0].channels[0].clone();
        for s in &slots[1..] {
            elementwise_max(&mut m, &s.channels[0]);
        }
        for s in &slots {
            assert!(m.iter().zip(&s.channels[0]).all(|(a, b)| a >= b));
        }
    }
}
