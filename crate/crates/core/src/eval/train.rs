use rand::seq::index;

use crate::codebook::learn_codebook;
use crate::config::{MetricConfig, RunConfig};
use crate::encoding::{encode_descriptors, CodebookSet, LlcParams, Signature, SignatureMeta};
use crate::error::{Error, Result};
use crate::features::{build_weight_map, extract_descriptors, hog_descriptor, Channel, WeightMap, WEIGHT_SIGMA_FRAC};
use crate::image::PersonImage;
use crate::metric::{fit_kernel_pca, fit_kissme, generate_pairs, FusionWeights, KernelPcaModel, PairPolicy};
use crate::odboa::{ChannelModel, MatchingModel};
use crate::orientation::{train_from_features, OrientationClassifier, OrientationLabel, SmoothingKernel};
use crate::pyramid::build_pyramid;
use crate::rng::Seed;

/// Everything needed to encode and match new images.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub height: u32,
    pub width: u32,
    pub codebooks: CodebookSet,
    pub llc: LlcParams,
    pub classifier: Option<OrientationClassifier>,
    pub smoothing: SmoothingKernel,
    pub matching: MatchingModel,
    pub seed: Seed,
}

impl TrainedModel {
    pub fn weight_map(&self) -> WeightMap {
        build_weight_map(self.height as usize, self.width as usize, WEIGHT_SIGMA_FRAC)
    }

    pub fn encode(&self, img: &PersonImage) -> Result<Signature> {
        encode_one(img, &self.codebooks, &self.llc, &self.weight_map())
    }

    /// The annotated orientation when present and allowed, else the prediction.
    pub fn orientation_of(&self, img: &PersonImage, use_true_labels: bool) -> Result<OrientationLabel> {
        resolve_orientation(img, self.classifier.as_ref(), &self.smoothing, use_true_labels)
    }
}

pub fn resolve_orientation(
    img: &PersonImage,
    classifier: Option<&OrientationClassifier>,
    kernel: &SmoothingKernel,
    use_true_labels: bool,
) -> Result<OrientationLabel> {
    match (img.orientation, classifier) {
        (Some(o), _) if use_true_labels => Ok(o),
        (_, Some(c)) => c.predict_orientation(img, kernel),
        (Some(o), None) => Ok(o),
        (None, None) => Err(Error::UnfittedMetric("orientation classifier")),
    }
}

fn check_shape(images: &[&PersonImage]) -> Result<(u32, u32)> {
    let first = images.first().ok_or(Error::NoUsableRows)?;
    let (w, h) = first.pixels.dimensions();
    if let Some(bad) = images.iter().find(|i| i.pixels.dimensions() != (w, h)) {
        return Err(Error::DimensionMismatch { expected: h as usize, got: bad.pixels.height() as usize });
    }
    Ok((h, w))
}

/// Learns the three body-structure codebooks from a seeded subset of `images`.
pub fn fit_codebooks(images: &[&PersonImage], cfg: &RunConfig, seed: Seed) -> Result<CodebookSet> {
    let (h, w) = check_shape(images)?;
    let pyramid = build_pyramid(h, w)?;
    let wm = build_weight_map(h as usize, w as usize, WEIGHT_SIGMA_FRAC);
    let picked: Vec<&PersonImage> = if images.len() > cfg.codebook.max_images {
        let mut idx = index::sample(&mut seed.derive(0).rng(), images.len(), cfg.codebook.max_images).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| images[i]).collect()
    } else {
        images.to_vec()
    };
    let descs =
        crate::par::map(&picked, |img| extract_descriptors(img, &wm)).into_iter().collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = descs.iter().collect();
    let params = cfg.codebook.params();
    let books = Channel::ALL
        .into_iter()
        .map(|c| learn_codebook(&refs, c, &pyramid, &params, seed.derive(1 + c.index() as u64)))
        .collect::<Result<Vec<_>>>()?;
    CodebookSet::new(books)
}

fn encode_one(img: &PersonImage, books: &CodebookSet, llc: &LlcParams, wm: &WeightMap) -> Result<Signature> {
    let d = extract_descriptors(img, wm)?;
    let meta = SignatureMeta { person: img.person.clone(), camera: img.camera, orientation: img.orientation };
    encode_descriptors(&d, meta, books, llc)
}

pub fn encode_all(images: &[&PersonImage], books: &CodebookSet, llc: &LlcParams) -> Result<Vec<Signature>> {
    let (h, w) = check_shape(images)?;
    let wm = build_weight_map(h as usize, w as usize, WEIGHT_SIGMA_FRAC);
    crate::par::map(images, |img| encode_one(img, books, llc, &wm)).into_iter().collect()
}

/// Fits the orientation classifier on the labelled images. Returns `None`
/// when the labels do not cover all eight orientations.
pub fn fit_classifier(images: &[&PersonImage], cfg: &RunConfig, seed: Seed) -> Result<Option<OrientationClassifier>> {
    let labelled: Vec<&PersonImage> = images.iter().copied().filter(|i| i.orientation.is_some()).collect();
    let labels: Vec<OrientationLabel> = labelled.iter().filter_map(|i| i.orientation).collect();
    let mut present = [false; 8];
    labels.iter().for_each(|o| present[o.index()] = true);
    if !present.iter().all(|p| *p) {
        log::warn!("orientation labels do not cover all 8 orientations; no classifier trained");
        return Ok(None);
    }
    let feats = crate::par::map(&labelled, |img| hog_descriptor(img).values);
    train_from_features(&feats, &labels, seed, &cfg.orientation.svm).map(Some)
}

fn project_all(pca: &KernelPcaModel, sigs: &[Signature], c: Channel) -> Result<Vec<Vec<f64>>> {
    crate::par::map(sigs, |s| pca.project(s.channel(c))).into_iter().collect()
}

/// Kernel PCA and KISSME per channel on training signatures.
pub fn fit_matching(
    signatures: &[Signature],
    metric: &MetricConfig,
    beta: FusionWeights,
    seed: Seed,
) -> Result<MatchingModel> {
    let n = signatures.len();
    let pca_idx: Vec<usize> = if n > metric.pca_max_samples {
        let mut idx = index::sample(&mut seed.derive(0).rng(), n, metric.pca_max_samples).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let meta: Vec<SignatureMeta> = signatures.iter().map(|s| s.meta.clone()).collect();
    let pairs = generate_pairs(&meta, metric.positive, metric.negative, metric.max_pairs, seed.derive(1))?;
    let dual_pairs = if metric.dual {
        Some(generate_pairs(
            &meta,
            PairPolicy::DissimilarOrientation,
            metric.negative,
            metric.max_pairs,
            seed.derive(2),
        )?)
    } else {
        None
    };
    let mut channels = Vec::with_capacity(3);
    for c in Channel::ALL {
        let train: Vec<Vec<f64>> = pca_idx.iter().map(|&i| signatures[i].channel(c).to_vec()).collect();
        let pca = fit_kernel_pca(&train, metric.pca_dim, metric.bandwidth)?;
        let z = project_all(&pca, signatures, c)?;
        let m = fit_kissme(&z, &pairs.positives, &pairs.negatives)?;
        let dissimilar = match &dual_pairs {
            Some(p) => Some(fit_kissme(&z, &p.positives, &p.negatives)?),
            None => None,
        };
        channels.push(ChannelModel { channel: c, pca, metric: m, dissimilar });
    }
    MatchingModel::new(channels, beta)
}

/// All training stages in sequence.
pub fn train_model(images: &[&PersonImage], cfg: &RunConfig, seed: Seed) -> Result<TrainedModel> {
    let (h, w) = check_shape(images)?;
    let codebooks = fit_codebooks(images, cfg, seed.derive(1))?;
    let classifier = if cfg.orientation.train { fit_classifier(images, cfg, seed.derive(2))? } else { None };
    let mut sigs = encode_all(images, &codebooks, &cfg.llc)?;
    if let Some(c) = &classifier {
        for (s, img) in sigs.iter_mut().zip(images) {
            if s.meta.orientation.is_none() {
                s.meta.orientation = Some(c.predict_orientation(img, &cfg.orientation.smoothing)?);
            }
        }
    }
    let matching = fit_matching(&sigs, &cfg.metric, cfg.fusion, seed.derive(3))?;
    Ok(TrainedModel {
        height: h,
        width: w,
        codebooks,
        llc: cfg.llc,
        classifier,
        smoothing: cfg.orientation.smoothing,
        matching,
        seed,
    })
}
