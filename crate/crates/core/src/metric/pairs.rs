use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::SignatureMeta;
use crate::error::{Error, Result};
use crate::orientation::{is_similar_orientation, OrientationLabel};
use crate::rng::Seed;

/// Orientation constraint on training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairPolicy {
    #[serde(rename = "all")]
    AllOrientation,
    #[serde(rename = "similar")]
    SimilarOrientation,
    #[serde(rename = "same")]
    SameOrientation,
    #[serde(rename = "dissimilar")]
    DissimilarOrientation,
}

impl PairPolicy {
    pub const ALL: [PairPolicy; 4] = [
        PairPolicy::AllOrientation,
        PairPolicy::SimilarOrientation,
        PairPolicy::SameOrientation,
        PairPolicy::DissimilarOrientation,
    ];

    /// Pairs with an unknown orientation on either side are always admitted.
    pub fn admits(self, a: Option<OrientationLabel>, b: Option<OrientationLabel>) -> bool {
        let (Some(a), Some(b)) = (a, b) else { return true };
        match self {
            PairPolicy::AllOrientation => true,
            PairPolicy::SimilarOrientation => is_similar_orientation(a, b),
            PairPolicy::SameOrientation => a == b,
            PairPolicy::DissimilarOrientation => !is_similar_orientation(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PairPolicy::AllOrientation => "all",
            PairPolicy::SimilarOrientation => "similar",
            PairPolicy::SameOrientation => "same",
            PairPolicy::DissimilarOrientation => "dissimilar",
        }
    }

    pub fn parse(s: &str) -> Option<PairPolicy> {
        PairPolicy::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(s))
    }
}

/// Index pairs `(i, j)` with `i < j` into the signature list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

// above this many images negatives are drawn by rejection instead of enumeration
const ENUMERATE_LIMIT: usize = 4000;

fn subsample<R: Rng>(pairs: Vec<(usize, usize)>, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if pairs.len() <= n {
        return pairs;
    }
    let mut picked = index::sample(rng, pairs.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|k| pairs[k]).collect()
}

/// Builds positive (same identity, different camera) and negative (different
/// identity) training pairs. Negatives are drawn across cameras when any exist
/// and are subsampled to the number of positives.
pub fn generate_pairs(
    meta: &[SignatureMeta],
    pos_policy: PairPolicy,
    neg_policy: PairPolicy,
    max_pairs: Option<usize>,
    seed: Seed,
) -> Result<PairSet> {
    let identities: HashSet<_> = meta.iter().map(|m| &m.person).collect();
    if identities.len() < 2 {
        return Err(Error::NoValidPairs(format!("need at least 2 identities, got {}", identities.len())));
    }
    let n = meta.len();
    let mut positives = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&meta[i], &meta[j]);
            if a.person == b.person && a.camera != b.camera && pos_policy.admits(a.orientation, b.orientation) {
                positives.push((i, j));
            }
        }
    }
    if positives.is_empty() {
        return Err(Error::NoValidPairs(format!("no positive pairs under policy {}", pos_policy.name())));
    }
    let mut rng = seed.rng();
    if let Some(cap) = max_pairs {
        positives = subsample(positives, cap, &mut rng);
    }
    let target = positives.len();

    let cross_exists = meta.iter().any(|m| m.camera != meta[0].camera);
    let is_negative = |i: usize, j: usize| {
        let (a, b) = (&meta[i], &meta[j]);
        a.person != b.person
            && (!cross_exists || a.camera != b.camera)
            && neg_policy.admits(a.orientation, b.orientation)
    };

    let negatives = if n <= ENUMERATE_LIMIT {
        let mut all = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if is_negative(i, j) {
                    all.push((i, j));
                }
            }
        }
        subsample(all, target, &mut rng)
    } else {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(target);
        let max_attempts = target.saturating_mul(200).max(10_000);
        for _ in 0..max_attempts {
            if out.len() == target {
                break;
            }
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            let (i, j) = (i.min(j), i.max(j));
            if i != j && is_negative(i, j) && seen.insert((i, j)) {
                out.push((i, j));
            }
        }
        out.sort_unstable();
        out
    };
    if negatives.is_empty() {
        return Err(Error::NoValidPairs(format!("no negative pairs under policy {}", neg_policy.name())));
    }
    Ok(PairSet { positives, negatives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{CameraId, PersonId};
    use crate::orientation::orientation_distance;

    fn complete(persons: usize) -> Vec<SignatureMeta> {
        let mut out = Vec::new();
        for p in 0..persons {
            for cam in 0..2 {
                for o in OrientationLabel::all() {
                    out.push(SignatureMeta {
                        person: PersonId(format!("p{p}")),
                        camera: CameraId(cam),
                        orientation: Some(o),
                    });
                }
            }
        }
        out
    }

    fn positives(meta: &[SignatureMeta], policy: PairPolicy) -> HashSet<(usize, usize)> {
        generate_pairs(meta, policy, PairPolicy::AllOrientation, None, Seed(1)).unwrap().positives.into_iter().collect()
    }

    #[test]
    fn similar_positive_count_on_complete_data() {
        let meta = complete(3);
        let pos = positives(&meta, PairPolicy::SimilarOrientation);
        assert_eq!(pos.len(), 3 * 24);
        assert_eq!(positives(&meta, PairPolicy::AllOrientation).len(), 3 * 64);
        assert_eq!(positives(&meta, PairPolicy::SameOrientation).len(), 3 * 8);
        for (i, j) in pos {
            let d = orientation_distance(meta[i].orientation.unwrap(), meta[j].orientation.unwrap());
            assert!(d < 2);
            assert_ne!(meta[i].camera, meta[j].camera);
        }
    }

    #[test]
    fn policies_nest_and_partition() {
        let meta = complete(2);
        let all = positives(&meta, PairPolicy::AllOrientation);
        let sim = positives(&meta, PairPolicy::SimilarOrientation);
        let same = positives(&meta, PairPolicy::SameOrientation);
        let dis = positives(&meta, PairPolicy::DissimilarOrientation);
        assert!(same.is_subset(&sim) && sim.is_subset(&all));
        assert!(sim.is_disjoint(&dis));
        assert_eq!(sim.len() + dis.len(), all.len());
    }

    #[test]
    fn negatives_balanced_seeded_and_valid() {
        let meta = complete(4);
        let a =
            generate_pairs(&meta, PairPolicy::SimilarOrientation, PairPolicy::AllOrientation, None, Seed(9)).unwrap();
        let b =
            generate_pairs(&meta, PairPolicy::SimilarOrientation, PairPolicy::AllOrientation, None, Seed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.negatives.len(), a.positives.len());
        for &(i, j) in &a.negatives {
            assert_ne!(meta[i].person, meta[j].person);
        }
        let capped =
            generate_pairs(&meta, PairPolicy::AllOrientation, PairPolicy::AllOrientation, Some(10), Seed(9)).unwrap();
        assert_eq!(capped.positives.len(), 10);
        assert_eq!(capped.negatives.len(), 10);
    }

    #[test]
    fn unknown_orientation_is_unconstrained() {
        let mut meta = complete(2);
        for m in &mut meta {
            m.orientation = None;
        }
        assert_eq!(positives(&meta, PairPolicy::SameOrientation).len(), 2 * 64);
    }

    #[test]
    fn degenerate_inputs() {
        let meta: Vec<_> = complete(1);
        assert!(matches!(
            generate_pairs(&meta, PairPolicy::AllOrientation, PairPolicy::AllOrientation, None, Seed(0)),
            Err(Error::NoValidPairs(_))
        ));
        let mut one_cam = complete(2);
        for m in &mut one_cam {
            m.camera = CameraId(0);
        }
        assert!(
            generate_pairs(&one_cam, PairPolicy::AllOrientation, PairPolicy::AllOrientation, None, Seed(0)).is_err()
        );
    }
}
