//! K-means and body-structure codebook learning.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Channel, ImageDescriptors};
use crate::pyramid::{BodyStructurePyramid, Part, NUM_PARTS};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KmeansParams {
    pub max_iter: usize,
    /// Stop once no centre moves farther than this.
    pub tol: f64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        KmeansParams { max_iter: 100, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    /// `m x dim`, row-major.
    pub centers: Vec<f64>,
    /// Distortion after each assignment step.
    pub distortion: Vec<f64>,
    pub iterations: usize,
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. `points` is `n x dim` row-major.
pub fn kmeans(points: &[f64], dim: usize, m: usize, seed: Seed, params: &KmeansParams) -> Result<KmeansResult> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument("point buffer is not a whole number of rows".into()));
    }
    let n = points.len() / dim;
    if m == 0 || n < m {
        return Err(Error::TooFewPoints { needed: m.max(1), got: n });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("k-means input contains non-finite values".into()));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = seed.rng();

    // k-means++ initialization
    let mut centers = Vec::with_capacity(m * dim);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.extend_from_slice(row(first));
    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..m {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in min_d.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a candidate")
        } else {
            // every point coincides with a centre; take any unused one
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = row(pick);
        centers.extend_from_slice(c);
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), c));
        }
    }

    let mut assign = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..params.max_iter.max(1) {
        iterations += 1;
        for i in 0..n {
            let (j, d) = nearest(row(i), &centers, dim);
            assign[i] = j;
            dists[i] = d;
        }
        let distortion: f64 = dists.iter().sum();
        if let Some(&prev) = history.last() {
            debug_assert!(distortion <= prev * (1.0 + 1e-12) + 1e-12, "distortion rose: {prev} -> {distortion}");
        }
        history.push(distortion);

        let mut sums = vec![0.0; m * dim];
        let mut counts = vec![0usize; m];
        for i in 0..n {
            let j = assign[i];
            counts[j] += 1;
            for (s, v) in sums[j * dim..(j + 1) * dim].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for j in 0..m {
            if counts[j] == 0 {
                // re-seed at the point worst served by its current centre
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= m");
                taken[far] = true;
                dists[far] = 0.0;
                sums[j * dim..(j + 1) * dim].copy_from_slice(row(far));
                counts[j] = 1;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..m {
            let c = &mut centers[j * dim..(j + 1) * dim];
            let inv = 1.0 / counts[j] as f64;
            let mut moved = 0.0;
            for (cv, s) in c.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                let nv = s * inv;
                moved += (nv - *cv) * (nv - *cv);
                *cv = nv;
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < params.tol {
            break;
        }
    }
    Ok(KmeansResult { centers, distortion: history, iterations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCodebook {
    pub part: Part,
    pub channel: Channel,
    pub dim: usize,
    /// `size x dim`, row-major; each row is one codebook entry.
    pub entries: Vec<f64>,
}

impl SubCodebook {
    pub fn size(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn entry(&self, j: usize) -> &[f64] {
        &self.entries[j * self.dim..(j + 1) * self.dim]
    }
}

/// Eight sub-codebooks for one descriptor channel, in canonical part order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyStructureCodebook {
    pub channel: Channel,
    pub dim: usize,
    pub size: usize,
    pub seed: Seed,
    pub parts: Vec<SubCodebook>,
}

impl BodyStructureCodebook {
    pub fn part(&self, part: Part) -> &SubCodebook {
        &self.parts[part.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookParams {
    /// Entries per sub-codebook.
    pub size: usize,
    /// Descriptors sampled per part for clustering.
    pub samples: usize,
    pub kmeans: KmeansParams,
}

impl Default for CodebookParams {
    fn default() -> Self {
        CodebookParams { size: 1024, samples: 5000, kmeans: KmeansParams::default() }
    }
}

/// Learns one channel's codebook from the pooled patch sets of `train`.
pub fn learn_codebook(
    train: &[&ImageDescriptors],
    channel: Channel,
    pyramid: &BodyStructurePyramid,
    params: &CodebookParams,
    seed: Seed,
) -> Result<BodyStructureCodebook> {
    let dim = channel.dim();
    let mut pools: Vec<Vec<&[f64]>> = vec![Vec::new(); NUM_PARTS];
    for img in train {
        if (img.height, img.width) != (pyramid.height, pyramid.width) {
            return Err(Error::DimensionMismatch { expected: pyramid.height as usize, got: img.height as usize });
        }
        for (center, row) in img.channel(channel).rows() {
            for part in pyramid.member_parts(*center) {
                pools[part.index()].push(row);
            }
        }
    }

    let learn = |part: Part| -> Result<SubCodebook> {
        let pool = &pools[part.index()];
        if pool.len() < params.size || pool.is_empty() {
            return Err(Error::InsufficientDescriptors {
                part: part.index() + 1,
                needed: params.size,
                got: pool.len(),
            });
        }
        let mut rng = seed.derive(part.index() as u64).rng();
        let picks: Vec<usize> = if pool.len() >= params.samples {
            index::sample(&mut rng, pool.len(), params.samples).into_vec()
        } else {
            (0..params.samples).map(|_| rng.random_range(0..pool.len())).collect()
        };
        let mut flat = Vec::with_capacity(picks.len() * dim);
        for i in picks {
            flat.extend_from_slice(pool[i]);
        }
        let km = kmeans(&flat, dim, params.size, seed.derive(100 + part.index() as u64), &params.kmeans)?;
        Ok(SubCodebook { part, channel, dim, entries: km.centers })
    };

    let parts = crate::par::map(&Part::ALL, |p| learn(*p));

    Ok(BodyStructureCodebook {
        channel,
        dim,
        size: params.size,
        seed,
        parts: parts.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DescriptorSet, ImageDescriptors};
    use crate::pyramid::build_pyramid;
    use rand_distr::{Distribution, Normal};

    fn sorted_rows(v: &[f64], dim: usize) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = v.chunks(dim).map(|c| c.to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows
    }

    #[test]
    fn m_points_m_clusters_is_identity() {
        let pts = vec![0.0, 0.0, 1.0, 5.0, -3.0, 2.0, 7.0, 7.0];
        let km = kmeans(&pts, 2, 4, Seed(1), &KmeansParams::default()).unwrap();
        assert_eq!(sorted_rows(&km.centers, 2), sorted_rows(&pts, 2));
    }

    #[test]
    fn two_blobs_recover_means() {
        let mut rng = Seed(5).rng();
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut pts = Vec::new();
        let mut sums = [[0.0; 2]; 2];
        for i in 0..400 {
            let blob = i % 2;
            let (cx, cy) = if blob == 0 { (0.0, 0.0) } else { (10.0, 4.0) };
            let (x, y) = (cx + noise.sample(&mut rng), cy + noise.sample(&mut rng));
            sums[blob][0] += x / 200.0;
            sums[blob][1] += y / 200.0;
            pts.extend([x, y]);
        }
        let km = kmeans(&pts, 2, 2, Seed(2), &KmeansParams::default()).unwrap();
        let centers = sorted_rows(&km.centers, 2);
        for (c, m) in centers.iter().zip(sums.iter()) {
            assert!((c[0] - m[0]).abs() < 0.1 && (c[1] - m[1]).abs() < 0.1, "{c:?} vs {m:?}");
        }
        let again = kmeans(&pts, 2, 2, Seed(2), &KmeansParams::default()).unwrap();
        assert_eq!(km, again);
    }

    #[test]
    fn distortion_never_increases_and_centres_stay_in_bounds() {
        let mut rng = Seed(8).rng();
        let pts: Vec<f64> = (0..300 * 3).map(|_| rng.random_range(-2.0..5.0)).collect();
        let km = kmeans(&pts, 3, 17, Seed(3), &KmeansParams::default()).unwrap();
        for w in km.distortion.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        for c in km.centers.chunks(3) {
            for (d, v) in c.iter().enumerate() {
                let col = pts.iter().skip(d).step_by(3);
                let lo = col.clone().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(*v >= lo && *v <= hi);
            }
        }
    }

    #[test]
    fn duplicate_points_still_give_m_centres() {
        let mut pts = vec![1.0; 20];
        pts.extend([5.0, 9.0]);
        let km = kmeans(&pts, 1, 3, Seed(0), &KmeansParams::default()).unwrap();
        assert_eq!(km.centers.len(), 3);
        assert!(km.centers.contains(&5.0) && km.centers.contains(&9.0));
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            kmeans(&[1.0, 2.0], 1, 3, Seed(0), &KmeansParams::default()),
            Err(Error::TooFewPoints { .. })
        ));
    }

    fn synthetic_descriptors(h: u32, w: u32, tag: f64) -> ImageDescriptors {
        let centers: Vec<(u32, u32)> =
            (0..(h - 8) / 4 + 1).flat_map(|r| (0..(w - 8) / 4 + 1).map(move |c| (c * 4 + 4, r * 4 + 4))).collect();
        let set = |channel: Channel| {
            let dim = channel.dim();
            let data = centers
                .iter()
                .flat_map(|&(x, y)| (0..dim).map(move |d| y as f64 * 1000.0 + x as f64 + d as f64 * 1e-3 + tag))
                .collect();
            DescriptorSet { channel, dim, centers: centers.clone(), data }
        };
        ImageDescriptors { height: h, width: w, sets: [set(Channel::Whsv), set(Channel::Lab), set(Channel::Sift)] }
    }

    #[test]
    fn codebook_uses_only_member_patches() {
        let pyr = build_pyramid(64, 24).unwrap();
        let imgs: Vec<_> = (0..6).map(|i| synthetic_descriptors(64, 24, i as f64 * 0.1)).collect();
        let refs: Vec<_> = imgs.iter().collect();
        let params = CodebookParams { size: 4, samples: 40, kmeans: KmeansParams::default() };
        let cb = learn_codebook(&refs, Channel::Lab, &pyr, &params, Seed(11)).unwrap();
        assert_eq!(cb.parts.len(), 8);
        for sub in &cb.parts {
            assert_eq!(sub.size(), 4);
            assert_eq!(sub.dim, 64);
            let region = pyr.region(sub.part);
            for j in 0..sub.size() {
                // first coordinate encodes the patch centre row
                let y = (sub.entry(j)[0] / 1000.0).floor() as u32;
                assert!(region.contains(y), "part {:?} entry row {y}", sub.part);
            }
        }
        let again = learn_codebook(&refs, Channel::Lab, &pyr, &params, Seed(11)).unwrap();
        assert_eq!(cb, again);
    }

    #[test]
    fn exact_pool_size_uses_every_descriptor() {
        let pyr = build_pyramid(64, 24).unwrap();
        let img = synthetic_descriptors(64, 24, 0.0);
        // the whole-body pool has every patch of the single image
        let n = img.channel(Channel::Whsv).len();
        let params = CodebookParams { size: n, samples: n, kmeans: KmeansParams::default() };
        let err = learn_codebook(&[&img], Channel::Whsv, &pyr, &params, Seed(1));
        // smaller parts cannot supply n entries
        assert!(matches!(err, Err(Error::InsufficientDescriptors { .. })));
        let mut pool: Vec<f64> = img.channel(Channel::Whsv).data.clone();
        let km = kmeans(&pool, 64, n, Seed(4), &KmeansParams::default()).unwrap();
        let mut got = sorted_rows(&km.centers, 64);
        pool = sorted_rows(&pool, 64).concat();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got.concat(), pool);
    }
}
