use rand::seq::index;

use super::bag::{AppearanceBag, Occupancy};
use crate::error::{Error, Result};
use crate::orientation::OrientationLabel;
use crate::rng::Seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// `(probe slot, gallery slot)` in ascending probe order.
    Pairs(Vec<(OrientationLabel, OrientationLabel)>),
    /// No same or adjacent match: `Q` random slots from each side.
    Fallback { probe: Vec<OrientationLabel>, gallery: Vec<OrientationLabel> },
}

impl Selection {
    pub fn probe_mask(&self) -> Occupancy {
        match self {
            Selection::Pairs(p) => Occupancy::from_labels(p.iter().map(|x| x.0)),
            Selection::Fallback { probe, .. } => Occupancy::from_labels(probe.iter().copied()),
        }
    }

    pub fn gallery_mask(&self) -> Occupancy {
        match self {
            Selection::Pairs(p) => Occupancy::from_labels(p.iter().map(|x| x.1)),
            Selection::Fallback { gallery, .. } => Occupancy::from_labels(gallery.iter().copied()),
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, Selection::Fallback { .. })
    }
}

/// The `+1` neighbour of `i` if occupied, else the `-1` neighbour.
pub fn adjacent_slot(occupied: Occupancy, i: OrientationLabel) -> Option<OrientationLabel> {
    [i.offset(1), i.offset(-1)].into_iter().find(|&o| occupied.contains(o))
}

pub fn adjacent_lookup(bag: &AppearanceBag, i: OrientationLabel) -> Option<OrientationLabel> {
    adjacent_slot(bag.occupancy(), i)
}

fn sample_slots(occupied: Occupancy, q: usize, rng: &mut impl rand::Rng) -> Vec<OrientationLabel> {
    let labels = occupied.labels();
    let mut picked = index::sample(rng, labels.len(), q).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|k| labels[k]).collect()
}

/// Slot selection on occupancy patterns alone.
pub fn select_slots(probe: Occupancy, gallery: Occupancy, seed: Seed) -> Result<Selection> {
    if probe.is_empty() || gallery.is_empty() {
        return Err(Error::EmptyBag);
    }
    let pairs: Vec<_> = probe
        .labels()
        .into_iter()
        .filter_map(|i| if gallery.contains(i) { Some((i, i)) } else { adjacent_slot(gallery, i).map(|g| (i, g)) })
        .collect();
    if !pairs.is_empty() {
        return Ok(Selection::Pairs(pairs));
    }
    let q = probe.count().min(gallery.count());
    let mut rng = seed.rng();
    let p = sample_slots(probe, q, &mut rng);
    let g = sample_slots(gallery, q, &mut rng);
    Ok(Selection::Fallback { probe: p, gallery: g })
}

pub fn select_pairs(probe: &AppearanceBag, gallery: &AppearanceBag, seed: Seed) -> Result<Selection> {
    select_slots(probe.occupancy(), gallery.occupancy(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::orientation_distance;

    fn o(v: u8) -> OrientationLabel {
        OrientationLabel::new(v as i64).unwrap()
    }

    fn mask(v: &[u8]) -> Occupancy {
        Occupancy::from_labels(v.iter().map(|&x| o(x)))
    }

    #[test]
    fn examples() {
        assert_eq!(
            select_slots(mask(&[1, 3]), mask(&[1, 3]), Seed(0)).unwrap(),
            Selection::Pairs(vec![(o(1), o(1)), (o(3), o(3))])
        );
        assert_eq!(select_slots(mask(&[1]), mask(&[2, 8]), Seed(0)).unwrap(), Selection::Pairs(vec![(o(1), o(2))]));
        match select_slots(mask(&[1]), mask(&[4, 5]), Seed(0)).unwrap() {
            Selection::Fallback { probe, gallery } => {
                assert_eq!(probe, vec![o(1)]);
                assert_eq!(gallery.len(), 1);
                assert!(gallery[0] == o(4) || gallery[0] == o(5));
            }
            other => panic!("{other:?}"),
        }
        assert!(select_slots(Occupancy(0), mask(&[1]), Seed(0)).is_err());
    }

    #[test]
    fn adjacency_examples() {
        assert_eq!(adjacent_slot(mask(&[2]), o(1)), Some(o(2)));
        assert_eq!(adjacent_slot(mask(&[8]), o(1)), Some(o(8)));
        assert_eq!(adjacent_slot(mask(&[5]), o(1)), None);
    }

    // Written independently from the implementation: plain arithmetic on slot numbers.
    fn oracle(p: u8, g: u8) -> Result<Vec<(u8, u8)>, usize> {
        let has = |m: u8, s: u8| m & (1 << (s - 1)) != 0;
        let mut out = Vec::new();
        for s in 1..=8u8 {
            if !has(p, s) {
                continue;
            }
            let next = if s == 8 { 1 } else { s + 1 };
            let prev = if s == 1 { 8 } else { s - 1 };
            if has(g, s) {
                out.push((s, s));
            } else if has(g, next) {
                out.push((s, next));
            } else if has(g, prev) {
                out.push((s, prev));
            }
        }
        if out.is_empty() {
            Err((p.count_ones().min(g.count_ones())) as usize)
        } else {
            Ok(out)
        }
    }

    #[test]
    fn exhaustive_against_rule_oracle() {
        for p in 1..=255u8 {
            for g in 1..=255u8 {
                let got = select_slots(Occupancy(p), Occupancy(g), Seed(p as u64 * 256 + g as u64)).unwrap();
                match (oracle(p, g), &got) {
                    (Ok(want), Selection::Pairs(pairs)) => {
                        let pairs: Vec<(u8, u8)> = pairs.iter().map(|(a, b)| (a.value(), b.value())).collect();
                        assert_eq!(pairs, want, "p={p:08b} g={g:08b}");
                        for (a, b) in &pairs {
                            assert!(orientation_distance(o(*a), o(*b)) < 2);
                        }
                        if p & g == p {
                            assert!(pairs.iter().all(|(a, b)| a == b));
                        }
                    }
                    (Err(q), Selection::Fallback { probe, gallery }) => {
                        assert_eq!(probe.len(), q);
                        assert_eq!(gallery.len(), q);
                        assert!(probe.iter().all(|s| Occupancy(p).contains(*s)));
                        assert!(gallery.iter().all(|s| Occupancy(g).contains(*s)));
                        let mut d = probe.clone();
                        d.dedup();
                        assert_eq!(d.len(), q);
                    }
                    (want, got) => panic!("p={p:08b} g={g:08b}: oracle {want:?}, got {got:?}"),
                }
            }
        }
    }

    #[test]
    fn fallback_is_seeded() {
        let a = select_slots(mask(&[1, 2]), mask(&[4, 5, 6]), Seed(3)).unwrap();
        assert_eq!(a, select_slots(mask(&[1, 2]), mask(&[4, 5, 6]), Seed(3)).unwrap());
    }
}
