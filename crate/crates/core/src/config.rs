//! Run configuration, stored as TOML.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codebook::{CodebookParams, KmeansParams};
use crate::encoding::LlcParams;
use crate::error::{Error, Result};
use crate::metric::{FusionWeights, PairPolicy};
use crate::odboa::MultiShotMethod;
use crate::orientation::{SmoothingKernel, SvmParams};
use crate::rng::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stochastic step derives from it.
    pub seed: Seed,
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub codebook: CodebookConfig,
    pub llc: LlcParams,
    pub orientation: OrientationConfig,
    pub metric: MetricConfig,
    pub fusion: FusionWeights,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: Seed(2016),
            paths: PathsConfig::default(),
            data: DataConfig::default(),
            codebook: CodebookConfig::default(),
            llc: LlcParams::default(),
            orientation: OrientationConfig::default(),
            metric: MetricConfig::default(),
            fusion: FusionWeights::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// CSV manifest with header `image_path,person_id,camera_id,orientation`.
    pub manifest: PathBuf,
    /// Base for relative image paths; defaults to the manifest's directory.
    pub image_root: Option<PathBuf>,
    pub archive: PathBuf,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            manifest: PathBuf::from("data/manifest.csv"),
            image_root: None,
            archive: PathBuf::from("model"),
            output: PathBuf::from("report"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Images are resized to this shape on load.
    pub height: u32,
    pub width: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { height: 128, width: 48 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookConfig {
    pub size: usize,
    pub samples: usize,
    /// Training images drawn (seeded) to supply codebook descriptors.
    pub max_images: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        let p = CodebookParams::default();
        CodebookConfig {
            size: p.size,
            samples: p.samples,
            max_images: 300,
            max_iter: p.kmeans.max_iter,
            tol: p.kmeans.tol,
        }
    }
}

impl CodebookConfig {
    pub fn params(&self) -> CodebookParams {
        CodebookParams {
            size: self.size,
            samples: self.samples,
            kmeans: KmeansParams { max_iter: self.max_iter, tol: self.tol },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrientationConfig {
    /// Fit the orientation classifier during training.
    pub train: bool,
    /// Use annotated orientations at test time; predict only unlabeled images.
    pub use_true_labels: bool,
    pub svm: SvmParams,
    pub smoothing: SmoothingKernel,
}

impl Default for OrientationConfig {
    fn default() -> Self {
        OrientationConfig {
            train: true,
            use_true_labels: true,
            svm: SvmParams::default(),
            smoothing: SmoothingKernel::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub pca_dim: usize,
    pub bandwidth: f64,
    /// Cap on signatures used to fit kernel PCA.
    pub pca_max_samples: usize,
    pub positive: PairPolicy,
    pub negative: PairPolicy,
    pub max_pairs: Option<usize>,
    /// Also fit a metric on dissimilar-orientation positives (dual methods).
    pub dual: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            pca_dim: 80,
            bandwidth: 0.8,
            pca_max_samples: 2000,
            positive: PairPolicy::SimilarOrientation,
            negative: PairPolicy::AllOrientation,
            max_pairs: None,
            dual: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub methods: Vec<MultiShotMethod>,
    pub probe_shots: usize,
    pub gallery_shots: usize,
    /// Evaluate every `m <= probe_shots`, `n <= gallery_shots` instead of one setting.
    pub grid: bool,
    /// Defaults to the lowest camera id.
    pub probe_camera: Option<u32>,
    /// Defaults to the second-lowest camera id.
    pub gallery_camera: Option<u32>,
    /// Fraction of identities used for training in each trial.
    pub train_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            trials: 10,
            methods: vec![MultiShotMethod::OdboaMidPooling],
            probe_shots: 4,
            gallery_shots: 4,
            grid: false,
            probe_camera: None,
            gallery_camera: None,
            train_fraction: 0.5,
        }
    }
}

impl ExperimentConfig {
    /// `(m, n)` shot settings in row-major order.
    pub fn settings(&self) -> Vec<(usize, usize)> {
        if self.grid {
            (1..=self.probe_shots).flat_map(|m| (1..=self.gallery_shots).map(move |n| (m, n))).collect()
        } else {
            vec![(self.probe_shots, self.gallery_shots)]
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths in the file are relative to the file
        if let Some(base) = path.parent() {
            cfg.paths.rebase(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Hex SHA-256 of the canonical TOML form. Output destinations are
    /// left out, so the same run written to two places hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.archive = PathBuf::new();
        c.paths.output = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seed.0 > i64::MAX as u64 {
            return bad(format!("seed {} exceeds {}", self.seed.0, i64::MAX));
        }
        if self.data.height < 16 || self.data.width < 16 {
            return bad(format!("image shape {}x{} is below 16x16", self.data.height, self.data.width));
        }
        if self.codebook.size == 0 || self.codebook.samples < self.codebook.size {
            return bad("codebook.samples must be at least codebook.size > 0".into());
        }
        if self.codebook.max_images == 0 {
            return bad("codebook.max_images must be positive".into());
        }
        self.llc.validate()?;
        self.fusion.validate()?;
        if self.metric.pca_dim == 0 || !(self.metric.bandwidth > 0.0) {
            return bad("metric.pca_dim and metric.bandwidth must be positive".into());
        }
        if self.metric.pca_max_samples <= self.metric.pca_dim {
            return bad("metric.pca_max_samples must exceed metric.pca_dim".into());
        }
        let e = &self.experiment;
        if e.trials == 0 || e.probe_shots == 0 || e.gallery_shots == 0 {
            return bad("experiment.trials, probe_shots and gallery_shots must be at least 1".into());
        }
        if e.methods.is_empty() {
            return bad("experiment.methods is empty".into());
        }
        if !(e.train_fraction > 0.0 && e.train_fraction < 1.0) {
            return bad("experiment.train_fraction must lie in (0, 1)".into());
        }
        if e.methods.iter().any(|m| m.is_dual()) && !self.metric.dual {
            return bad("dual methods require metric.dual = true".into());
        }
        Ok(())
    }
}

impl PathsConfig {
    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.manifest, &mut self.archive, &mut self.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(root) = &mut self.image_root {
            if root.is_relative() {
                *root = base.join(&*root);
            }
        }
    }
}
