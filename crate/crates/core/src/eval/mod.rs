//! Datasets, synthetic data, training stages, experiments and reports.

mod cmc;
mod dataset;
mod experiment;
mod report;
mod synth;
mod train;

pub use cmc::{cmc, cmc_from_scores, match_ranks, CmcCurve};
pub use dataset::{
    load_dataset, load_image, parse_manifest, resize_to, write_dataset, write_manifest, Dataset, Manifest, ManifestRow,
    MANIFEST_HEADER,
};
pub use experiment::{
    run_experiment, run_experiment_variants, sample_shots, split_identities, ExperimentReport, MetricVariant,
    SettingResult, TrialInfo, TrialSplit,
};
pub use report::write_report;
pub use synth::{camera_view, synth_generate, SynthParams, SynthPerson, NOISE_SIGMA, SYNTH_HEIGHT, SYNTH_WIDTH};
pub use train::{
    encode_all, fit_classifier, fit_codebooks, fit_matching, resolve_orientation, train_model, TrainedModel,
};
