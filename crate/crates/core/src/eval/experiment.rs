use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::cmc::{cmc_from_scores, CmcCurve};
use super::dataset::Dataset;
use super::train::{encode_all, fit_classifier, fit_codebooks, fit_matching, resolve_orientation};
use crate::config::{MetricConfig, RunConfig};
use crate::encoding::Signature;
use crate::error::{Error, Result};
use crate::image::{CameraId, PersonId, PersonImage};
use crate::odboa::{build_bag, AppearanceBag, MatchContext, MultiShotMethod};
use crate::rng::Seed;

/// Identity-level train/test partition for one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSplit {
    pub trial: usize,
    pub train: Vec<PersonId>,
    pub test: Vec<PersonId>,
}

/// Seeded identity split; both sides are returned sorted.
pub fn split_identities(persons: &[PersonId], train_fraction: f64, trial: usize, seed: Seed) -> Result<TrialSplit> {
    let mut ids: Vec<PersonId> = persons.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 identities to split, got {}", ids.len())));
    }
    ids.shuffle(&mut seed.rng());
    let n_train = ((ids.len() as f64 * train_fraction).round() as usize).clamp(2, ids.len() - 2);
    let mut test = ids.split_off(n_train);
    let mut train = ids;
    train.sort();
    test.sort();
    Ok(TrialSplit { trial, train, test })
}

/// `k` indices into `0..n`: without replacement when possible.
pub fn sample_shots(n: usize, k: usize, seed: Seed) -> Vec<usize> {
    let mut rng = seed.rng();
    if n >= k {
        let mut v = index::sample(&mut rng, n, k).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..k).map(|_| rng.random_range(0..n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricVariant {
    pub name: String,
    pub metric: MetricConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingResult {
    pub method: MultiShotMethod,
    pub variant: usize,
    pub probe_shots: usize,
    pub gallery_shots: usize,
    pub trials: Vec<CmcCurve>,
    pub mean: CmcCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialInfo {
    pub trial: usize,
    pub seed: Seed,
    pub train_persons: usize,
    pub test_persons: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: Seed,
    pub probe_camera: CameraId,
    pub gallery_camera: CameraId,
    pub variants: Vec<String>,
    pub results: Vec<SettingResult>,
    pub trials: Vec<TrialInfo>,
}

impl ExperimentReport {
    pub fn result(&self, method: MultiShotMethod, m: usize, n: usize, variant: usize) -> Option<&SettingResult> {
        self.results
            .iter()
            .find(|r| r.method == method && r.probe_shots == m && r.gallery_shots == n && r.variant == variant)
    }

    pub fn rank1(&self, method: MultiShotMethod, m: usize, n: usize, variant: usize) -> Option<f64> {
        self.result(method, m, n, variant).map(|r| r.mean.rank1())
    }
}

fn cameras(cfg: &RunConfig, dataset: &Dataset) -> Result<(CameraId, CameraId)> {
    let cams = dataset.cameras();
    let pick = |want: Option<u32>, fallback: usize| -> Result<CameraId> {
        match want {
            Some(c) if cams.contains(&CameraId(c)) => Ok(CameraId(c)),
            Some(c) => Err(Error::InvalidArgument(format!("camera {c} not present in the dataset"))),
            None => cams
                .get(fallback)
                .copied()
                .ok_or_else(|| Error::InvalidArgument("experiments need images from two cameras".into())),
        }
    };
    let probe = pick(cfg.experiment.probe_camera, 0)?;
    let gallery = match cfg.experiment.gallery_camera {
        Some(_) => pick(cfg.experiment.gallery_camera, 1)?,
        None => *cams
            .iter()
            .find(|&&c| c != probe)
            .ok_or_else(|| Error::InvalidArgument("experiments need images from two cameras".into()))?,
    };
    if probe == gallery {
        return Err(Error::InvalidArgument("probe and gallery cameras must differ".into()));
    }
    Ok((probe, gallery))
}

/// Runs the configured experiment with the configuration's own metric settings.
pub fn run_experiment(cfg: &RunConfig, dataset: &Dataset) -> Result<ExperimentReport> {
    run_experiment_variants(cfg, dataset, &[MetricVariant { name: "default".into(), metric: cfg.metric }])
}

/// Runs the experiment once per metric variant. Splits, codebooks, encodings
/// and shot samples are shared, so variants and methods are compared on paired data.
pub fn run_experiment_variants(
    cfg: &RunConfig,
    dataset: &Dataset,
    variants: &[MetricVariant],
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if variants.is_empty() {
        return Err(Error::InvalidArgument("no metric variants".into()));
    }
    if cfg.experiment.methods.iter().any(|m| m.is_dual()) && variants.iter().any(|v| !v.metric.dual) {
        return Err(Error::Config("dual methods require metric.dual = true".into()));
    }
    let (probe_cam, gallery_cam) = cameras(cfg, dataset)?;
    let persons = dataset.persons();
    let settings = cfg.experiment.settings();
    let mut curves: BTreeMap<(usize, usize, usize, usize), Vec<CmcCurve>> = BTreeMap::new();
    let mut trials = Vec::with_capacity(cfg.experiment.trials);

    for t in 0..cfg.experiment.trials {
        let tseed = cfg.seed.derive2(10, t as u64);
        let split = split_identities(&persons, cfg.experiment.train_fraction, t, tseed.derive(0))?;
        let train_imgs: Vec<&PersonImage> =
            dataset.images.iter().filter(|i| split.train.binary_search(&i.person).is_ok()).collect();
        let test_ids: Vec<PersonId> = split
            .test
            .iter()
            .filter(|p| {
                let has = |c| dataset.images.iter().any(|i| &i.person == *p && i.camera == c);
                has(probe_cam) && has(gallery_cam)
            })
            .cloned()
            .collect();
        if test_ids.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "trial {t}: fewer than 2 test identities seen by both cameras"
            )));
        }
        let test_imgs: Vec<&PersonImage> = dataset
            .images
            .iter()
            .filter(|i| (i.camera == probe_cam || i.camera == gallery_cam) && test_ids.binary_search(&i.person).is_ok())
            .collect();
        log::info!("trial {t}: {} train / {} test identities", split.train.len(), test_ids.len());

        let books = fit_codebooks(&train_imgs, cfg, tseed.derive(1))?;
        let need_classifier =
            !cfg.orientation.use_true_labels || train_imgs.iter().chain(&test_imgs).any(|i| i.orientation.is_none());
        let classifier = if cfg.orientation.train && need_classifier {
            fit_classifier(&train_imgs, cfg, tseed.derive(2))?
        } else {
            None
        };
        let mut train_sigs = encode_all(&train_imgs, &books, &cfg.llc)?;
        for (s, img) in train_sigs.iter_mut().zip(&train_imgs) {
            if s.meta.orientation.is_none() {
                if let Some(c) = &classifier {
                    s.meta.orientation = Some(c.predict_orientation(img, &cfg.orientation.smoothing)?);
                }
            }
        }
        let mut test_sigs = encode_all(&test_imgs, &books, &cfg.llc)?;
        for (s, img) in test_sigs.iter_mut().zip(&test_imgs) {
            s.meta.orientation = Some(resolve_orientation(
                img,
                classifier.as_ref(),
                &cfg.orientation.smoothing,
                cfg.orientation.use_true_labels,
            )?);
        }
        let models = variants
            .iter()
            .map(|v| fit_matching(&train_sigs, &v.metric, cfg.fusion, tseed.derive(3)))
            .collect::<Result<Vec<_>>>()?;

        // per test identity: signature indices in probe and gallery camera
        let by_person: Vec<(Vec<usize>, Vec<usize>)> = test_ids
            .iter()
            .map(|p| {
                let pick = |cam| -> Vec<usize> {
                    (0..test_sigs.len())
                        .filter(|&k| &test_sigs[k].meta.person == p && test_sigs[k].meta.camera == cam)
                        .collect()
                };
                (pick(probe_cam), pick(gallery_cam))
            })
            .collect();

        for &(m, n) in &settings {
            let sseed = tseed.derive2(4, ((m as u64) << 16) | n as u64);
            let bags = |side: u64, shots: usize, pick: &dyn Fn(&(Vec<usize>, Vec<usize>)) -> &Vec<usize>| {
                by_person
                    .iter()
                    .enumerate()
                    .map(|(k, entry)| {
                        let pool = pick(entry);
                        let chosen: Vec<Signature> = sample_shots(pool.len(), shots, sseed.derive2(side, k as u64))
                            .into_iter()
                            .map(|i| test_sigs[pool[i]].clone())
                            .collect();
                        build_bag(&chosen)
                    })
                    .collect::<Result<Vec<AppearanceBag>>>()
            };
            let probes = bags(0, m, &|e| &e.0)?;
            let gallery = bags(1, n, &|e| &e.1)?;
            for (v, model) in models.iter().enumerate() {
                let mut ctx = MatchContext::new(model, &probes, &gallery);
                for &method in &cfg.experiment.methods {
                    let scores = ctx.score_matrix(method, sseed.derive(5))?;
                    let curve = cmc_from_scores(&scores, &test_ids, &test_ids)?;
                    let idx = cfg.experiment.methods.iter().position(|x| *x == method).unwrap_or(0);
                    curves.entry((idx, v, m, n)).or_default().push(curve);
                }
            }
        }
        trials.push(TrialInfo {
            trial: t,
            seed: tseed,
            train_persons: split.train.len(),
            test_persons: test_ids.len(),
        });
    }

    let results = curves
        .into_iter()
        .map(|((idx, variant, m, n), trials)| {
            Ok(SettingResult {
                method: cfg.experiment.methods[idx],
                variant,
                probe_shots: m,
                gallery_shots: n,
                mean: mean_padded(&trials)?,
                trials,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        probe_camera: probe_cam,
        gallery_camera: gallery_cam,
        variants: variants.iter().map(|v| v.name.clone()).collect(),
        results,
        trials,
    })
}

// trials may differ in gallery size when identities miss a camera; pad with 1.0
fn mean_padded(curves: &[CmcCurve]) -> Result<CmcCurve> {
    let g = curves.iter().map(|c| c.rates.len()).max().unwrap_or(0);
    let padded: Vec<CmcCurve> = curves.iter().map(|c| CmcCurve { rates: (1..=g).map(|r| c.at(r)).collect() }).collect();
    CmcCurve::mean(&padded)
}
