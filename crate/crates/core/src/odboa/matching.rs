use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::bag::{pool_selection, pool_selection_raw, AppearanceBag, Occupancy};
use super::selection::{select_pairs, Selection};
use crate::error::{Error, Result};
use crate::features::Channel;
use crate::metric::{mahalanobis, FusionWeights, KernelPcaModel, MetricModel};
use crate::orientation::{orientation_distance, OrientationLabel};
use crate::rng::Seed;

/// Weights for same, adjacent and other orientation pairs.
pub const WAVG_WEIGHTS: [f64; 3] = [1.0, 0.9, 0.4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MultiShotMethod {
    #[serde(rename = "low-pooling")]
    LowPooling,
    #[serde(rename = "odboa-low-pooling")]
    OdboaLowPooling,
    #[serde(rename = "mid-pooling")]
    MidPooling,
    #[serde(rename = "odboa-mid-pooling")]
    OdboaMidPooling,
    #[serde(rename = "avg")]
    Avg,
    #[serde(rename = "odboa-wavg")]
    OdboaWAvg,
    #[serde(rename = "dual-avg")]
    DualAvg,
    #[serde(rename = "dual-wavg")]
    DualWAvg,
}

impl MultiShotMethod {
    pub const ALL: [MultiShotMethod; 8] = [
        MultiShotMethod::LowPooling,
        MultiShotMethod::OdboaLowPooling,
        MultiShotMethod::MidPooling,
        MultiShotMethod::OdboaMidPooling,
        MultiShotMethod::Avg,
        MultiShotMethod::OdboaWAvg,
        MultiShotMethod::DualAvg,
        MultiShotMethod::DualWAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MultiShotMethod::LowPooling => "low-pooling",
            MultiShotMethod::OdboaLowPooling => "odboa-low-pooling",
            MultiShotMethod::MidPooling => "mid-pooling",
            MultiShotMethod::OdboaMidPooling => "odboa-mid-pooling",
            MultiShotMethod::Avg => "avg",
            MultiShotMethod::OdboaWAvg => "odboa-wavg",
            MultiShotMethod::DualAvg => "dual-avg",
            MultiShotMethod::DualWAvg => "dual-wavg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|m| m.name() == key)
    }

    pub fn is_dual(self) -> bool {
        matches!(self, MultiShotMethod::DualAvg | MultiShotMethod::DualWAvg)
    }

    /// The slot-level comparisons this method scores for one bag pair.
    pub fn comparisons(self, probe: &AppearanceBag, gallery: &AppearanceBag, seed: Seed) -> Result<Vec<Comparison>> {
        let (pm, gm) = (probe.occupancy(), gallery.occupancy());
        if pm.is_empty() || gm.is_empty() {
            return Err(Error::EmptyBag);
        }
        let pooled = |probe, gallery, level| {
            vec![Comparison { probe, gallery, level, weight: 1.0, metric: MetricChoice::Primary }]
        };
        let selected = |level| -> Result<Vec<Comparison>> {
            let sel = select_pairs(probe, gallery, seed)?;
            Ok(pooled(sel.probe_mask(), sel.gallery_mask(), level))
        };
        let slot_pairs = |weighted: bool, dual: bool| {
            let mut out = Vec::with_capacity(pm.count() * gm.count());
            for p in pm.labels() {
                for g in gm.labels() {
                    let d = orientation_distance(p, g) as usize;
                    out.push(Comparison {
                        probe: Occupancy::from_labels([p]),
                        gallery: Occupancy::from_labels([g]),
                        level: PoolLevel::Mid,
                        weight: if weighted { WAVG_WEIGHTS[d.min(2)] } else { 1.0 },
                        metric: if dual && d >= 2 { MetricChoice::Dissimilar } else { MetricChoice::Primary },
                    });
                }
            }
            out
        };
        Ok(match self {
            MultiShotMethod::LowPooling => pooled(pm, gm, PoolLevel::Low),
            MultiShotMethod::OdboaLowPooling => selected(PoolLevel::Low)?,
            MultiShotMethod::MidPooling => pooled(pm, gm, PoolLevel::Mid),
            MultiShotMethod::OdboaMidPooling => selected(PoolLevel::Mid)?,
            MultiShotMethod::Avg => slot_pairs(false, false),
            MultiShotMethod::OdboaWAvg => slot_pairs(true, false),
            MultiShotMethod::DualAvg => slot_pairs(false, true),
            MultiShotMethod::DualWAvg => slot_pairs(true, true),
        })
    }
}

impl std::fmt::Display for MultiShotMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether selected slots are fused on the unit-norm mid-level features or
/// on the raw pooled codes (descriptor-level fusion).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolLevel {
    Mid,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricChoice {
    Primary = 0,
    Dissimilar = 1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub probe: Occupancy,
    pub gallery: Occupancy,
    pub level: PoolLevel,
    pub weight: f64,
    pub metric: MetricChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub channel: Channel,
    pub pca: KernelPcaModel,
    pub metric: MetricModel,
    /// Metric trained on dissimilar-orientation positives, for the dual methods.
    pub dissimilar: Option<MetricModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingModel {
    pub channels: Vec<ChannelModel>,
    pub beta: FusionWeights,
}

impl MatchingModel {
    pub fn new(channels: Vec<ChannelModel>, beta: FusionWeights) -> Result<Self> {
        beta.validate()?;
        if channels.len() != 3 || channels.iter().zip(Channel::ALL).any(|(m, c)| m.channel != c) {
            return Err(Error::InvalidArgument("need one model per channel in wHSV, LAB, SIFT order".into()));
        }
        for m in &channels {
            for metric in std::iter::once(&m.metric).chain(&m.dissimilar) {
                if metric.dim != m.pca.dim {
                    return Err(Error::DimensionMismatch { expected: m.pca.dim, got: metric.dim });
                }
            }
        }
        Ok(MatchingModel { channels, beta })
    }

    pub fn has_dual(&self) -> bool {
        self.channels.iter().all(|c| c.dissimilar.is_some())
    }

    pub fn project(&self, features: &[Vec<f64>; 3]) -> Result<[Vec<f64>; 3]> {
        let mut out: [Vec<f64>; 3] = Default::default();
        for (o, (m, f)) in out.iter_mut().zip(self.channels.iter().zip(features)) {
            *o = m.pca.project(f)?;
        }
        Ok(out)
    }

    /// Per-channel Mahalanobis distances between projected features.
    pub fn channel_distances(&self, a: &[Vec<f64>; 3], b: &[Vec<f64>; 3], choice: MetricChoice) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (c, m) in self.channels.iter().enumerate() {
            let metric = match choice {
                MetricChoice::Primary => &m.metric,
                MetricChoice::Dissimilar => {
                    m.dissimilar.as_ref().ok_or(Error::UnfittedMetric("dissimilar-orientation"))?
                }
            };
            out[c] = mahalanobis(metric, &a[c], &b[c])?;
        }
        Ok(out)
    }

    fn fuse(&self, d: &[f64; 3]) -> f64 {
        self.beta.as_array().iter().zip(d).map(|(b, v)| b * v).sum()
    }
}

fn pooled_features(bag: &AppearanceBag, mask: Occupancy, level: PoolLevel) -> Result<[Vec<f64>; 3]> {
    let slots = bag.selected(mask);
    match level {
        PoolLevel::Mid => pool_selection(&slots),
        PoolLevel::Low => pool_selection_raw(&slots),
    }
}

fn check_dual(model: &MatchingModel, method: MultiShotMethod) -> Result<()> {
    if method.is_dual() && !model.has_dual() {
        return Err(Error::UnfittedMetric("dissimilar-orientation"));
    }
    Ok(())
}

/// Similarity of one bag pair: the negated weighted mean of the
/// weight-fused raw channel distances.
pub fn match_bags(
    probe: &AppearanceBag,
    gallery: &AppearanceBag,
    model: &MatchingModel,
    method: MultiShotMethod,
    seed: Seed,
) -> Result<f64> {
    check_dual(model, method)?;
    let comps = method.comparisons(probe, gallery, seed)?;
    let (mut num, mut den) = (0.0, 0.0);
    for c in &comps {
        let a = model.project(&pooled_features(probe, c.probe, c.level)?)?;
        let b = model.project(&pooled_features(gallery, c.gallery, c.level)?)?;
        let d = model.channel_distances(&a, &b, c.metric)?;
        num += c.weight * model.fuse(&d);
        den += c.weight;
    }
    Ok(-num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Side {
    Probe,
    Gallery,
}

type Key = (Side, usize, Occupancy, PoolLevel);

/// Probe and gallery bags with a projection cache shared across methods.
pub struct MatchContext<'a> {
    model: &'a MatchingModel,
    probes: &'a [AppearanceBag],
    gallery: &'a [AppearanceBag],
    cache: HashMap<Key, [Vec<f64>; 3]>,
}

impl<'a> MatchContext<'a> {
    pub fn new(model: &'a MatchingModel, probes: &'a [AppearanceBag], gallery: &'a [AppearanceBag]) -> Self {
        MatchContext { model, probes, gallery, cache: HashMap::new() }
    }

    fn bag(&self, side: Side, i: usize) -> &AppearanceBag {
        match side {
            Side::Probe => &self.probes[i],
            Side::Gallery => &self.gallery[i],
        }
    }

    /// Probe-by-gallery similarity matrix. Within each probe row, every
    /// channel's distances are min-max normalized over all comparisons of
    /// that row that use the same metric, then fused. Bag pair `(p, g)` uses seed `seed.derive2(p, g)`.
    pub fn score_matrix(&mut self, method: MultiShotMethod, seed: Seed) -> Result<Vec<Vec<f64>>> {
        check_dual(self.model, method)?;
        let mut comps = Vec::with_capacity(self.probes.len());
        for (p, pb) in self.probes.iter().enumerate() {
            let row = self
                .gallery
                .iter()
                .enumerate()
                .map(|(g, gb)| method.comparisons(pb, gb, seed.derive2(p as u64, g as u64)))
                .collect::<Result<Vec<_>>>()?;
            comps.push(row);
        }

        let mut missing = HashSet::new();
        for (p, row) in comps.iter().enumerate() {
            for (g, cs) in row.iter().enumerate() {
                for c in cs {
                    for key in [(Side::Probe, p, c.probe, c.level), (Side::Gallery, g, c.gallery, c.level)] {
                        if !self.cache.contains_key(&key) {
                            missing.insert(key);
                        }
                    }
                }
            }
        }
        let missing: Vec<Key> = missing.into_iter().collect();
        let projected = crate::par::map(&missing, |&(side, i, mask, level)| {
            pooled_features(self.bag(side, i), mask, level).and_then(|f| self.model.project(&f))
        });
        for (key, value) in missing.into_iter().zip(projected) {
            self.cache.insert(key, value?);
        }

        let rows: Vec<usize> = (0..self.probes.len()).collect();
        let cache = &self.cache;
        let model = self.model;
        crate::par::map(&rows, |&p| -> Result<Vec<f64>> {
            let mut dists: Vec<Vec<[f64; 3]>> = Vec::with_capacity(self.gallery.len());
            // separate ranges per metric so the dual methods' two scales do not mix
            let (mut lo, mut hi) = ([[f64::INFINITY; 3]; 2], [[f64::NEG_INFINITY; 3]; 2]);
            for (g, cs) in comps[p].iter().enumerate() {
                let mut ds = Vec::with_capacity(cs.len());
                for c in cs {
                    let a = &cache[&(Side::Probe, p, c.probe, c.level)];
                    let b = &cache[&(Side::Gallery, g, c.gallery, c.level)];
                    let d = model.channel_distances(a, b, c.metric)?;
                    let r = c.metric as usize;
                    for k in 0..3 {
                        lo[r][k] = lo[r][k].min(d[k]);
                        hi[r][k] = hi[r][k].max(d[k]);
                    }
                    ds.push(d);
                }
                dists.push(ds);
            }
            let beta = model.beta.as_array();
            let norm = |r: usize, k: usize, v: f64| {
                if hi[r][k] > lo[r][k] {
                    (v - lo[r][k]) / (hi[r][k] - lo[r][k])
                } else {
                    0.0
                }
            };
            Ok(comps[p]
                .iter()
                .zip(&dists)
                .map(|(cs, ds)| {
                    let (mut num, mut den) = (0.0, 0.0);
                    for (c, d) in cs.iter().zip(ds) {
                        let fused: f64 = (0..3).map(|k| beta[k] * norm(c.metric as usize, k, d[k])).sum();
                        num += c.weight * fused;
                        den += c.weight;
                    }
                    -num / den
                })
                .collect())
        })
        .into_iter()
        .collect()
    }
}

/// One-off probe-by-gallery similarity matrix.
pub fn score_matrix(
    probes: &[AppearanceBag],
    gallery: &[AppearanceBag],
    model: &MatchingModel,
    method: MultiShotMethod,
    seed: Seed,
) -> Result<Vec<Vec<f64>>> {
    MatchContext::new(model, probes, gallery).score_matrix(method, seed)
}

/// Slot pairs in a selection, as written by the command-line matcher.
pub fn selection_pairs(sel: &Selection) -> Vec<(OrientationLabel, OrientationLabel)> {
    match sel {
        Selection::Pairs(p) => p.clone(),
        Selection::Fallback { probe, gallery } => probe.iter().copied().zip(gallery.iter().copied()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{Signature, SignatureMeta};
    use crate::image::{CameraId, PersonId};
    use crate::metric::fit_kernel_pca;
    use crate::odboa::build_bag;
    use rand::Rng;

    const D: usize = 12;

    fn sig(person: &str, cam: u32, o: u8, rng: &mut impl Rng) -> Signature {
        let pooled = [(); 3].map(|_| (0..D).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>());
        Signature::from_pooled(
            SignatureMeta {
                person: PersonId(person.into()),
                camera: CameraId(cam),
                orientation: Some(OrientationLabel::new(o as i64).unwrap()),
            },
            pooled,
        )
    }

    fn model(dual: bool) -> MatchingModel {
        let mut rng = Seed(5).rng();
        let train: Vec<Vec<f64>> = (0..20)
            .map(|_| crate::encoding::l2_normalize(&(0..D).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let channels = Channel::ALL
            .into_iter()
            .map(|channel| {
                let pca = fit_kernel_pca(&train, 6, 0.8).unwrap();
                ChannelModel {
                    channel,
                    pca,
                    metric: MetricModel::identity(6),
                    dissimilar: dual.then(|| MetricModel::from_matrix(&(nalgebra::DMatrix::identity(6, 6) * 3.0))),
                }
            })
            .collect();
        MatchingModel::new(channels, FusionWeights::default()).unwrap()
    }

    fn bag(person: &str, cam: u32, orients: &[u8], seed: u64) -> AppearanceBag {
        let mut rng = Seed(seed).rng();
        let sigs: Vec<_> = orients.iter().map(|&o| sig(person, cam, o, &mut rng)).collect();
        build_bag(&sigs).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in MultiShotMethod::ALL {
            assert_eq!(MultiShotMethod::parse(m.name()), Some(m));
        }
        assert_eq!(MultiShotMethod::parse("ODBOA_MID_POOLING"), Some(MultiShotMethod::OdboaMidPooling));
        assert_eq!(MultiShotMethod::parse("nope"), None);
    }

    #[test]
    fn identical_single_slot_bags_score_zero() {
        let m = model(true);
        let b = bag("a", 0, &[3], 1);
        for method in MultiShotMethod::ALL {
            assert_eq!(match_bags(&b, &b, &m, method, Seed(0)).unwrap(), 0.0, "{method}");
        }
    }

    #[test]
    fn wavg_weights_and_dual_metric_choice() {
        let p = bag("a", 0, &[1], 1);
        let g = bag("b", 1, &[1, 2, 5], 2);
        let cs = MultiShotMethod::DualWAvg.comparisons(&p, &g, Seed(0)).unwrap();
        let w: Vec<f64> = cs.iter().map(|c| c.weight).collect();
        assert_eq!(w, vec![1.0, 0.9, 0.4]);
        let m: Vec<MetricChoice> = cs.iter().map(|c| c.metric).collect();
        assert_eq!(m, vec![MetricChoice::Primary, MetricChoice::Primary, MetricChoice::Dissimilar]);
        assert!(MultiShotMethod::Avg.comparisons(&p, &g, Seed(0)).unwrap().iter().all(|c| c.weight == 1.0));
    }

    #[test]
    fn dual_requires_second_metric() {
        let m = model(false);
        let b = bag("a", 0, &[1, 2], 1);
        assert!(matches!(match_bags(&b, &b, &m, MultiShotMethod::DualAvg, Seed(0)), Err(Error::UnfittedMetric(_))));
        assert!(matches!(
            score_matrix(&[b.clone()], &[b], &m, MultiShotMethod::DualWAvg, Seed(0)),
            Err(Error::UnfittedMetric(_))
        ));
    }

    #[test]
    fn avg_is_symmetric_and_deterministic() {
        let m = model(true);
        let a = bag("a", 0, &[1, 4, 6], 1);
        let b = bag("b", 1, &[2, 3], 2);
        for method in
            [MultiShotMethod::Avg, MultiShotMethod::OdboaWAvg, MultiShotMethod::DualAvg, MultiShotMethod::MidPooling]
        {
            let ab = match_bags(&a, &b, &m, method, Seed(1)).unwrap();
            let ba = match_bags(&b, &a, &m, method, Seed(1)).unwrap();
            assert!((ab - ba).abs() < 1e-9, "{method}");
            assert_eq!(ab, match_bags(&a, &b, &m, method, Seed(1)).unwrap());
        }
    }

    #[test]
    fn score_matrix_normalizes_rows_and_is_deterministic() {
        let m = model(true);
        let probes: Vec<_> = (0..4).map(|i| bag(&format!("p{i}"), 0, &[1, 3], i)).collect();
        let gallery: Vec<_> = (0..5).map(|i| bag(&format!("g{i}"), 1, &[2, 5, 7], 10 + i)).collect();
        let mut ctx = MatchContext::new(&m, &probes, &gallery);
        for method in MultiShotMethod::ALL {
            let s = ctx.score_matrix(method, Seed(2)).unwrap();
            assert_eq!(s, score_matrix(&probes, &gallery, &m, method, Seed(2)).unwrap());
            for row in &s {
                assert_eq!(row.len(), 5);
                // fused normalized distances lie within [0, sum of weights]
                assert!(row.iter().all(|v| *v <= 0.0 && *v >= -4.0));
            }
            if matches!(method, MultiShotMethod::MidPooling | MultiShotMethod::OdboaMidPooling) {
                // single comparison per cell: each channel spans [0, 1], so some cell is at 0 for the best channel
                for row in &s {
                    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let worst = row.iter().cloned().fold(f64::INFINITY, f64::min);
                    assert!(best > worst);
                }
            }
        }
    }

    #[test]
    fn selection_drives_odboa_pooling() {
        let p = bag("a", 0, &[1, 5], 1);
        let g = bag("b", 1, &[2, 3, 5], 2);
        let cs = MultiShotMethod::OdboaMidPooling.comparisons(&p, &g, Seed(0)).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].probe, p.occupancy());
        assert_eq!(cs[0].gallery.labels().iter().map(|o| o.value()).collect::<Vec<_>>(), vec![2, 5]);
        let all = MultiShotMethod::MidPooling.comparisons(&p, &g, Seed(0)).unwrap();
        assert_eq!(all[0].gallery, g.occupancy());
    }
}
