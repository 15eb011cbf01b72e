//! Dimensionality reduction, metric learning and distance fusion.

mod fusion;
mod kissme;
mod kpca;
mod pairs;

pub use fusion::{fuse_distances, normalize_distances, FusionWeights};
pub use kissme::{clip_psd, fit_kissme, fit_kissme_from_diffs, mahalanobis, MetricModel};
pub use kpca::{fit_kernel_pca, KernelPcaModel};
pub use pairs::{generate_pairs, PairPolicy, PairSet};
