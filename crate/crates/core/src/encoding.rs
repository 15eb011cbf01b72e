//! Locality-constrained linear coding and body-structure max pooling.
//!
//! Every patch descriptor is coded against the sub-codebook of each part
//! containing the patch centre. Codes of one part are max-pooled, the eight
//! pooled vectors are concatenated in canonical part order, and the result is
//! L2-normalized per channel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::codebook::{sq_dist, BodyStructureCodebook, SubCodebook};
use crate::error::{Error, Result};
use crate::features::{extract_descriptors, Channel, ImageDescriptors, WeightMap};
use crate::image::{CameraId, PersonId, PersonImage};
use crate::orientation::OrientationLabel;
use crate::pyramid::{build_pyramid, BodyStructurePyramid, Part, NUM_PARTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlcParams {
    pub lambda: f64,
    /// Decay bandwidth of the locality adaptor, applied to min-shifted distances.
    pub sigma: f64,
    /// Neighbourhood size of the approximated coder.
    pub k: usize,
}

impl Default for LlcParams {
    fn default() -> Self {
        LlcParams { lambda: 1e-4, sigma: 1.0, k: 5 }
    }
}

impl LlcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.sigma > 0.0) || self.k == 0 {
            return Err(Error::InvalidArgument(format!("invalid LLC parameters {self:?}")));
        }
        Ok(())
    }
}

/// A code over an `size`-entry sub-codebook; coefficients outside
/// `entries` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Code {
    pub part: Part,
    pub size: usize,
    pub entries: Vec<(usize, f64)>,
}

impl Code {
    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.size];
        for &(j, c) in &self.entries {
            v[j] = c;
        }
        v
    }
}

const JITTER: f64 = 1e-8;

/// Solves `c = argmin c^T C c  s.t. 1^T c = 1` via `C c~ = 1`, `c = c~ / 1^T c~`.
fn solve_sum_to_one(mut c: DMatrix<f64>) -> Result<DVector<f64>> {
    let n = c.nrows();
    let ones = DVector::from_element(n, 1.0);
    let trace = c.trace();
    let finish = |sol: DVector<f64>| -> Option<DVector<f64>> {
        let s = sol.sum();
        (s.is_finite() && s.abs() > 1e-300 && sol.iter().all(|v| v.is_finite())).then(|| sol / s)
    };
    if trace == 0.0 {
        // the input is reproduced exactly by every combination
        return Ok(DVector::from_element(n, 1.0 / n as f64));
    }
    if let Some(ch) = c.clone().cholesky() {
        if let Some(sol) = finish(ch.solve(&ones)) {
            return Ok(sol);
        }
    }
    for i in 0..n {
        c[(i, i)] += JITTER * trace / n as f64;
    }
    c.lu().solve(&ones).and_then(finish).ok_or(Error::SingularSystem)
}

/// Shifted covariance `Z Z^T` of the selected entries around `x`.
fn shifted_covariance(x: &[f64], book: &SubCodebook, idx: &[usize]) -> DMatrix<f64> {
    let dim = book.dim;
    let z = DMatrix::from_fn(idx.len(), dim, |r, d| book.entry(idx[r])[d] - x[d]);
    &z * z.transpose()
}

/// Exact LLC with an explicit locality adaptor `d` (one weight per entry).
pub fn llc_with_adaptor(x: &[f64], book: &SubCodebook, adaptor: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let m = book.size();
    if adaptor.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: adaptor.len() });
    }
    let idx: Vec<usize> = (0..m).collect();
    let mut c = shifted_covariance(x, book, &idx);
    for j in 0..m {
        c[(j, j)] += lambda * adaptor[j] * adaptor[j];
    }
    Ok(solve_sum_to_one(c)?.iter().copied().collect())
}

/// Locality adaptor `exp((dist - min dist) / sigma)` over Euclidean distances.
pub fn locality_adaptor(x: &[f64], book: &SubCodebook, sigma: f64) -> Vec<f64> {
    let dist: Vec<f64> = (0..book.size()).map(|j| sq_dist(x, book.entry(j)).sqrt()).collect();
    let min = dist.iter().copied().fold(f64::INFINITY, f64::min);
    dist.iter().map(|d| ((d - min) / sigma).min(700.0).exp()).collect()
}

/// The analytic LLC solution over the full sub-codebook.
pub fn llc_encode_exact(x: &[f64], book: &SubCodebook, params: &LlcParams) -> Result<Code> {
    check_dim(x, book)?;
    let d = locality_adaptor(x, book, params.sigma);
    let coeffs = llc_with_adaptor(x, book, &d, params.lambda)?;
    Ok(Code { part: book.part, size: book.size(), entries: coeffs.into_iter().enumerate().collect() })
}

/// Indices of the `k` nearest entries, ties to the lower index, nearest first.
pub fn nearest_entries(x: &[f64], book: &SubCodebook, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = (0..book.size()).map(|j| (sq_dist(x, book.entry(j)), j)).collect();
    let k = k.min(order.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    order.into_iter().map(|(_, j)| j).collect()
}

/// Approximated LLC: constrained least squares over the `k` nearest entries
/// with `lambda * trace` conditioning in place of the locality term.
pub fn llc_encode_knn(x: &[f64], book: &SubCodebook, k: usize, lambda: f64) -> Result<Code> {
    check_dim(x, book)?;
    if k == 0 || k > book.size() {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={}", book.size())));
    }
    let idx = nearest_entries(x, book, k);
    let mut c = shifted_covariance(x, book, &idx);
    let reg = lambda * c.trace();
    for i in 0..idx.len() {
        c[(i, i)] += reg;
    }
    let w = solve_sum_to_one(c)?;
    Ok(Code { part: book.part, size: book.size(), entries: idx.into_iter().zip(w.iter().copied()).collect() })
}

fn check_dim(x: &[f64], book: &SubCodebook) -> Result<()> {
    if x.len() != book.dim {
        return Err(Error::DimensionMismatch { expected: book.dim, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("descriptor contains non-finite values".into()));
    }
    Ok(())
}

/// Row-wise max pooling of a part's codes. No codes pools to zeros.
pub fn pool_part(codes: &[Code], size: usize) -> Vec<f64> {
    let mut acc = MaxPool::new(size);
    codes.iter().for_each(|c| acc.push(c));
    acc.finish()
}

/// Streaming elementwise max over dense-equivalent codes.
struct MaxPool {
    max: Vec<f64>,
    hits: Vec<usize>,
    n: usize,
}

impl MaxPool {
    fn new(size: usize) -> Self {
        MaxPool { max: vec![f64::NEG_INFINITY; size], hits: vec![0; size], n: 0 }
    }

    fn push(&mut self, code: &Code) {
        self.n += 1;
        for &(j, c) in &code.entries {
            self.hits[j] += 1;
            if c > self.max[j] {
                self.max[j] = c;
            }
        }
    }

    fn finish(self) -> Vec<f64> {
        if self.n == 0 {
            return vec![0.0; self.max.len()];
        }
        self.max
            .into_iter()
            .zip(self.hits)
            // a code that skips entry j contributes an implicit zero
            .map(|(m, h)| if h < self.n { m.max(0.0) } else { m })
            .collect()
    }
}

pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Codebooks for all three channels, indexed by [`Channel::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookSet {
    pub channels: Vec<BodyStructureCodebook>,
}

impl CodebookSet {
    pub fn new(channels: Vec<BodyStructureCodebook>) -> Result<Self> {
        if channels.len() != 3 || channels.iter().enumerate().any(|(i, c)| c.channel.index() != i) {
            return Err(Error::InvalidArgument("codebook set must hold whsv, lab, sift in order".into()));
        }
        Ok(CodebookSet { channels })
    }

    pub fn channel(&self, c: Channel) -> &BodyStructureCodebook {
        &self.channels[c.index()]
    }

    pub fn size(&self) -> usize {
        self.channels[0].size
    }
}

/// Max-pooled codes of the union of several images' descriptors, per channel,
/// before normalization. A single image gives its ordinary mid-level feature.
pub fn encode_descriptor_union(
    images: &[&ImageDescriptors],
    books: &CodebookSet,
    pyramid: &BodyStructurePyramid,
    params: &LlcParams,
) -> Result<[Vec<f64>; 3]> {
    params.validate()?;
    let mut out: [Vec<f64>; 3] = Default::default();
    for channel in Channel::ALL {
        let book = books.channel(channel);
        if book.dim != channel.dim() {
            return Err(Error::DimensionMismatch { expected: channel.dim(), got: book.dim });
        }
        let mut pools: Vec<MaxPool> = (0..NUM_PARTS).map(|_| MaxPool::new(book.size)).collect();
        for img in images {
            for (center, row) in img.channel(channel).rows() {
                for part in pyramid.member_parts(*center) {
                    let code = llc_encode_knn(row, book.part(part), params.k.min(book.size), params.lambda)?;
                    pools[part.index()].push(&code);
                }
            }
        }
        let mut concat = Vec::with_capacity(NUM_PARTS * book.size);
        for pool in pools {
            concat.extend(pool.finish());
        }
        out[channel.index()] = concat;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureMeta {
    pub person: PersonId,
    pub camera: CameraId,
    pub orientation: Option<OrientationLabel>,
}

/// Single-image mid-level representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub meta: SignatureMeta,
    /// Unit-norm feature per channel, length `8 * M`.
    pub channels: [Vec<f64>; 3],
    /// The same features before normalization, kept for descriptor-level fusion.
    pub pooled: [Vec<f64>; 3],
}

impl Signature {
    pub fn from_pooled(meta: SignatureMeta, pooled: [Vec<f64>; 3]) -> Self {
        let channels = [l2_normalize(&pooled[0]), l2_normalize(&pooled[1]), l2_normalize(&pooled[2])];
        Signature { meta, channels, pooled }
    }

    pub fn channel(&self, c: Channel) -> &[f64] {
        &self.channels[c.index()]
    }
}

pub fn encode_descriptors(
    descriptors: &ImageDescriptors,
    meta: SignatureMeta,
    books: &CodebookSet,
    params: &LlcParams,
) -> Result<Signature> {
    let pyramid = build_pyramid(descriptors.height, descriptors.width)?;
    let pooled = encode_descriptor_union(&[descriptors], books, &pyramid, params)?;
    Ok(Signature::from_pooled(meta, pooled))
}

/// Full single-image pipeline: descriptors, LLC, body-structure pooling.
pub fn encode_image(img: &PersonImage, books: &CodebookSet, params: &LlcParams, wm: &WeightMap) -> Result<Signature> {
    let descriptors = extract_descriptors(img, wm)?;
    let meta = SignatureMeta { person: img.person.clone(), camera: img.camera, orientation: img.orientation };
    encode_descriptors(&descriptors, meta, books, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::BodyStructureCodebook;
    use crate::features::{build_weight_map, DescriptorSet};
    use crate::rng::Seed;
    use ::image::{Rgb, RgbImage};
    use proptest::prelude::*;
    use rand::Rng;

    fn book(m: usize, dim: usize, seed: u64) -> SubCodebook {
        let mut rng = Seed(seed).rng();
        SubCodebook {
            part: Part::Whole,
            channel: Channel::Lab,
            dim,
            entries: (0..m * dim).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    fn vec_of(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = Seed(seed).rng();
        (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn exact_code_of_an_entry_is_one_hot() {
        let b = book(12, 16, 1);
        let x = b.entry(7).to_vec();
        let params = LlcParams { lambda: 1e-10, ..Default::default() };
        let c = llc_encode_exact(&x, &b, &params).unwrap().to_dense();
        assert!((c[7] - 1.0).abs() < 1e-3, "{c:?}");
    }

    #[test]
    fn codes_sum_to_one() {
        let b = book(12, 8, 2);
        for s in 0..20 {
            let x = vec_of(8, 100 + s);
            let exact = llc_encode_exact(&x, &b, &LlcParams::default()).unwrap();
            let knn = llc_encode_knn(&x, &b, 5, 1e-4).unwrap();
            assert!((exact.sum() - 1.0).abs() < 1e-9);
            assert!((knn.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn knn_support_is_the_nearest_entries() {
        let b = book(20, 6, 3);
        let x = vec_of(6, 4);
        let code = llc_encode_knn(&x, &b, 5, 1e-4).unwrap();
        let mut brute: Vec<(f64, usize)> = (0..20).map(|j| (sq_dist(&x, b.entry(j)), j)).collect();
        brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut support: Vec<usize> = code.entries.iter().map(|e| e.0).collect();
        let mut expect: Vec<usize> = brute[..5].iter().map(|e| e.1).collect();
        support.sort();
        expect.sort();
        assert_eq!(support, expect);
    }

    #[test]
    fn knn_ties_go_to_lower_index() {
        let b = SubCodebook { part: Part::Head, channel: Channel::Lab, dim: 1, entries: vec![1.0, -1.0, 2.0, 1.0] };
        assert_eq!(nearest_entries(&[0.0], &b, 2), vec![0, 1]);
        assert_eq!(nearest_entries(&[0.0], &b, 3), vec![0, 1, 3]);
    }

    #[test]
    fn knn_with_full_neighbourhood_matches_exact_when_well_posed() {
        let b = book(5, 8, 5);
        let x = vec_of(8, 6);
        let exact = llc_encode_exact(&x, &b, &LlcParams { lambda: 1e-12, ..Default::default() }).unwrap().to_dense();
        let knn = llc_encode_knn(&x, &b, 5, 1e-12).unwrap().to_dense();
        for (a, k) in exact.iter().zip(&knn) {
            assert!((a - k).abs() < 1e-4, "{exact:?} vs {knn:?}");
        }
    }

    #[test]
    fn knn_code_of_an_entry() {
        let b = book(30, 8, 7);
        let code = llc_encode_knn(b.entry(11), &b, 5, 1e-4).unwrap().to_dense();
        assert!((code[11] - 1.0).abs() < 1e-2, "{}", code[11]);
        assert!(llc_encode_knn(b.entry(0), &b, 31, 1e-4).is_err());
    }

    #[test]
    fn all_identical_neighbours_give_uniform_weights() {
        let b = SubCodebook {
            part: Part::Head,
            channel: Channel::Lab,
            dim: 2,
            entries: vec![1.0, 1.0, 1.0, 1.0, 5.0, 5.0],
        };
        let code = llc_encode_knn(&[1.0, 1.0], &b, 2, 1e-4).unwrap();
        assert_eq!(code.to_dense(), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn locality_prefers_the_near_entry() {
        // both entries reconstruct x equally; only the adaptor differs
        let b = SubCodebook { part: Part::Head, channel: Channel::Lab, dim: 2, entries: vec![1.0, 0.0, 0.0, 1.0] };
        let c = llc_with_adaptor(&[0.0, 0.0], &b, &[1.0, 1.0f64.exp().powi(3)], 0.5).unwrap();
        assert!(c[1].abs() < c[0].abs(), "{c:?}");
        // real distances: the far entry gets less weight
        let b = SubCodebook { part: Part::Head, channel: Channel::Lab, dim: 2, entries: vec![0.3, 0.0, 0.0, 3.0] };
        let code = llc_encode_exact(&[0.0, 0.0], &b, &LlcParams { lambda: 0.1, sigma: 0.5, k: 2 }).unwrap().to_dense();
        assert!(code[1].abs() < code[0].abs());
    }

    #[test]
    fn adaptor_scaling_trades_against_lambda() {
        let b = book(12, 8, 9);
        let x = vec_of(8, 10);
        let d = locality_adaptor(&x, &b, 1.0);
        let scale = 3.7;
        let d_scaled: Vec<f64> = d.iter().map(|v| v / scale).collect();
        let a = llc_with_adaptor(&x, &b, &d, 1e-3).unwrap();
        let c = llc_with_adaptor(&x, &b, &d_scaled, 1e-3 * scale * scale).unwrap();
        for (u, v) in a.iter().zip(&c) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn pooling_examples() {
        let code = |e: Vec<(usize, f64)>| Code { part: Part::Head, size: 2, entries: e };
        let single = code(vec![(0, 0.3), (1, 0.7)]);
        assert_eq!(pool_part(&[single.clone()], 2), vec![0.3, 0.7]);
        assert_eq!(pool_part(&[code(vec![(0, 1.0), (1, 0.0)]), code(vec![(0, 0.0), (1, 1.0)])], 2), vec![1.0, 1.0]);
        assert_eq!(pool_part(&[], 3), vec![0.0; 3]);
        // entries missing from one code count as zero
        let neg = code(vec![(0, -0.5), (1, 1.5)]);
        assert_eq!(pool_part(&[neg.clone()], 2), vec![-0.5, 1.5]);
        assert_eq!(pool_part(&[neg, code(vec![(1, 1.0)])], 2), vec![0.0, 1.5]);
    }

    proptest! {
        #[test]
        fn pooling_is_commutative_idempotent_monotone(
            raw in prop::collection::vec(prop::collection::btree_map(0usize..6, -1.0f64..1.0, 1..4), 1..6),
            extra in prop::collection::btree_map(0usize..6, -1.0f64..1.0, 1..4),
        ) {
            let codes: Vec<Code> = raw
                .into_iter()
                .map(|e| Code { part: Part::Head, size: 6, entries: e.into_iter().collect() })
                .collect();
            let extra: Vec<(usize, f64)> = extra.into_iter().collect();
            let pooled = pool_part(&codes, 6);
            let mut rev = codes.clone();
            rev.reverse();
            prop_assert_eq!(&pool_part(&rev, 6), &pooled);
            let mut doubled = codes.clone();
            doubled.extend(codes.iter().cloned());
            prop_assert_eq!(&pool_part(&doubled, 6), &pooled);
            let mut more = codes.clone();
            more.push(Code { part: Part::Head, size: 6, entries: extra });
            let bigger = pool_part(&more, 6);
            for (a, b) in pooled.iter().zip(&bigger) {
                prop_assert!(b >= a);
            }
        }
    }

    fn random_codebooks(m: usize, seed: u64) -> CodebookSet {
        let mut rng = Seed(seed).rng();
        let channels = Channel::ALL
            .iter()
            .map(|&channel| {
                let dim = channel.dim();
                let parts = Part::ALL
                    .iter()
                    .map(|&part| {
                        let mut entries: Vec<f64> = (0..m * dim).map(|_| rng.random_range(0.0..1.0)).collect();
                        for row in entries.chunks_mut(dim) {
                            let s: f64 = row.iter().sum();
                            row.iter_mut().for_each(|v| *v /= s);
                        }
                        SubCodebook { part, channel, dim, entries }
                    })
                    .collect();
                BodyStructureCodebook { channel, dim, size: m, seed: Seed(seed), parts }
            })
            .collect();
        CodebookSet::new(channels).unwrap()
    }

    fn test_image() -> PersonImage {
        let mut rgb = RgbImage::new(48, 128);
        for (x, y, p) in rgb.enumerate_pixels_mut() {
            *p = Rgb([(x * 5) as u8, (y * 2) as u8, ((x * y) % 251) as u8]);
        }
        PersonImage::new(rgb, "a".into(), CameraId(1), OrientationLabel::new(3).ok()).unwrap()
    }

    #[test]
    fn signature_shape_norm_and_determinism() {
        let books = random_codebooks(16, 1);
        let wm = build_weight_map(128, 48, 0.25);
        let img = test_image();
        let s = encode_image(&img, &books, &LlcParams::default(), &wm).unwrap();
        for c in Channel::ALL {
            assert_eq!(s.channel(c).len(), 8 * 16);
            let n: f64 = s.channel(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
        assert_eq!(s, encode_image(&img, &books, &LlcParams::default(), &wm).unwrap());
        assert_eq!(s.meta.camera, CameraId(1));
    }

    #[test]
    fn patch_order_does_not_matter() {
        let books = random_codebooks(8, 2);
        let wm = build_weight_map(128, 48, 0.25);
        let d = extract_descriptors(&test_image(), &wm).unwrap();
        let mut shuffled = d.clone();
        let n = d.sets[0].len();
        let perm: Vec<usize> = (0..n).rev().collect();
        for set in shuffled.sets.iter_mut() {
            let orig: DescriptorSet = set.clone();
            set.centers = perm.iter().map(|&i| orig.centers[i]).collect();
            set.data = perm.iter().flat_map(|&i| orig.row(i).to_vec()).collect();
        }
        let meta = SignatureMeta { person: "a".into(), camera: CameraId(0), orientation: None };
        let a = encode_descriptors(&d, meta.clone(), &books, &LlcParams::default()).unwrap();
        let b = encode_descriptors(&shuffled, meta, &books, &LlcParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn descriptor_union_equals_max_of_pooled_features() {
        let books = random_codebooks(8, 3);
        let wm = build_weight_map(128, 48, 0.25);
        let a = extract_descriptors(&test_image(), &wm).unwrap();
        let mut other = test_image();
        other.pixels.pixels_mut().for_each(|p| p.0.reverse());
        let b = extract_descriptors(&other, &wm).unwrap();
        let pyr = build_pyramid(128, 48).unwrap();
        let p = LlcParams::default();
        let union = encode_descriptor_union(&[&a, &b], &books, &pyr, &p).unwrap();
        let pa = encode_descriptor_union(&[&a], &books, &pyr, &p).unwrap();
        let pb = encode_descriptor_union(&[&b], &books, &pyr, &p).unwrap();
        for c in 0..3 {
            let expect: Vec<f64> = pa[c].iter().zip(&pb[c]).map(|(x, y)| x.max(*y)).collect();
            assert_eq!(union[c], expect);
        }
    }
}
