use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::NUM_ORIENTATIONS;
use super::{orientation_distance, smooth_scores, OrientationLabel, OrientationScores, SmoothingKernel};
use crate::error::{Error, Result};
use crate::features::hog_descriptor;
use crate::image::PersonImage;
use crate::rng::Seed;

/// Primal stochastic sub-gradient (Pegasos) settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    pub epochs: usize,
    /// Multiplier on the `1 / (reg * t)` step schedule.
    pub lr: f64,
    pub reg: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { epochs: 50, lr: 1.0, reg: 1e-4 }
    }
}

/// Logistic calibration `p = 1 / (1 + exp(-(scale * margin + offset)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    pub offset: f64,
}

impl Calibration {
    pub fn identity() -> Self {
        Calibration { scale: 1.0, offset: 0.0 }
    }

    pub fn probability(&self, margin: f64) -> f64 {
        logistic(self.scale * margin + self.offset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub calibration: Calibration,
}

impl BinaryModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

/// Eight one-vs-all linear SVMs over HOG features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationClassifier {
    pub models: Vec<BinaryModel>,
}

impl OrientationClassifier {
    pub fn feature_len(&self) -> usize {
        self.models[0].weights.len()
    }

    pub fn raw_scores_features(&self, x: &[f64]) -> Result<OrientationScores> {
        if x.len() != self.feature_len() {
            return Err(Error::DimensionMismatch { expected: self.feature_len(), got: x.len() });
        }
        let mut psi = [0.0; NUM_ORIENTATIONS];
        for (p, m) in psi.iter_mut().zip(&self.models) {
            *p = m.calibration.probability(m.margin(x));
        }
        Ok(OrientationScores(psi))
    }

    pub fn raw_scores(&self, img: &PersonImage) -> Result<OrientationScores> {
        self.raw_scores_features(&hog_descriptor(img).values)
    }

    pub fn predict_features(&self, x: &[f64], kernel: &SmoothingKernel) -> Result<OrientationLabel> {
        Ok(smooth_scores(&self.raw_scores_features(x)?, kernel).argmax())
    }

    pub fn predict_orientation(&self, img: &PersonImage, kernel: &SmoothingKernel) -> Result<OrientationLabel> {
        self.predict_features(&hog_descriptor(img).values, kernel)
    }
}

/// Trains the orientation estimator on labelled images.
pub fn train_orientation(images: &[PersonImage], seed: Seed, params: &SvmParams) -> Result<OrientationClassifier> {
    let mut feats = Vec::with_capacity(images.len());
    let mut labels = Vec::with_capacity(images.len());
    for img in images {
        let label = img
            .orientation
            .ok_or_else(|| Error::DegenerateLabels("training image without orientation label".into()))?;
        feats.push(hog_descriptor(img).values);
        labels.push(label);
    }
    train_from_features(&feats, &labels, seed, params)
}

pub fn train_from_features(
    features: &[Vec<f64>],
    labels: &[OrientationLabel],
    seed: Seed,
    params: &SvmParams,
) -> Result<OrientationClassifier> {
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument("features and labels differ in length".into()));
    }
    if features.is_empty() {
        return Err(Error::DegenerateLabels("no training samples".into()));
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let mut present = [0usize; NUM_ORIENTATIONS];
    for l in labels {
        present[l.index()] += 1;
    }
    if present.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateLabels("fewer than two orientation classes".into()));
    }
    if let Some(missing) = present.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateLabels(format!("orientation {} has no training samples", missing + 1)));
    }

    let models = (0..NUM_ORIENTATIONS)
        .map(|class| {
            let targets: Vec<f64> = labels.iter().map(|l| if l.index() == class { 1.0 } else { -1.0 }).collect();
            train_binary(features, &targets, seed.derive(class as u64), params)
        })
        .collect();
    Ok(OrientationClassifier { models })
}

fn train_binary(features: &[Vec<f64>], targets: &[f64], seed: Seed, params: &SvmParams) -> BinaryModel {
    let dim = features[0].len();
    // bias is the last coordinate against a constant feature of 1
    let mut w = vec![0.0; dim + 1];
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = seed.rng();
    let radius = 1.0 / params.reg.sqrt();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = params.lr / (params.reg * t as f64);
            let x = &features[i];
            let y = targets[i];
            let margin = y * (dot(&w[..dim], x) + w[dim]);
            let shrink = (1.0 - eta * params.reg).max(0.0);
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += eta * y * xj;
                }
                w[dim] += eta * y;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    let bias = w.pop().unwrap_or(0.0);
    let margins: Vec<f64> = features.iter().map(|x| dot(&w, x) + bias).collect();
    let calibration = fit_platt(&margins, targets);
    BinaryModel { weights: w, bias, calibration }
}

/// Platt scaling by damped Newton iterations on the regularized targets.
fn fit_platt(margins: &[f64], targets: &[f64]) -> Calibration {
    let n_pos = targets.iter().filter(|&&t| t > 0.0).count() as f64;
    let n_neg = targets.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let soft: Vec<f64> = targets.iter().map(|&t| if t > 0.0 { hi } else { lo }).collect();

    let loss = |a: f64, b: f64| -> f64 {
        margins
            .iter()
            .zip(&soft)
            .map(|(&m, &t)| {
                let z = a * m + b;
                // log(1 + e^z) - t z, evaluated stably
                let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                softplus - t * z
            })
            .sum()
    };

    let (mut a, mut b) = (1.0, ((n_pos + 1.0) / (n_neg + 1.0)).ln());
    let mut f = loss(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (&m, &t) in margins.iter().zip(&soft) {
            let p = logistic(a * m + b);
            let d = p - t;
            let s = p * (1.0 - p);
            ga += d * m;
            gb += d;
            haa += s * m * m;
            hab += s * m;
            hbb += s;
        }
        if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let (da, db) =
            if det.abs() > 1e-18 { (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det) } else { (-ga, -gb) };
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = loss(na, nb);
            if nf < f {
                a = na;
                b = nb;
                f = nf;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Calibration { scale: a, offset: b }
}

/// Returns (exact accuracy, same-or-adjacent accuracy).
pub fn accuracy(predicted: &[OrientationLabel], truth: &[OrientationLabel]) -> (f64, f64) {
    assert_eq!(predicted.len(), truth.len());
    if truth.is_empty() {
        return (0.0, 0.0);
    }
    let n = truth.len() as f64;
    let exact = predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64;
    let near = predicted.iter().zip(truth).filter(|(p, t)| orientation_distance(**p, **t) <= 1).count() as f64;
    (exact / n, near / n)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
