//! Person re-identification with body-structure mid-level features and
//! orientation-driven bags of appearances.
//!
//! The pipeline, bottom-up:
//!
//! * [`features`] extracts dense wHSV / LAB / SIFT patch descriptors and HOG.
//! * [`pyramid`] splits a pedestrian image into eight body-structure parts.
//! * [`codebook`] learns one k-means sub-codebook per part and channel.
//! * [`encoding`] LLC-codes every patch against its part's sub-codebook and
//!   max-pools the codes into a per-channel [`encoding::Signature`].
//! * [`orientation`] estimates one of eight quantized orientations.
//! * [`metric`] reduces signatures with Gaussian kernel PCA and learns a
//!   KISSME Mahalanobis metric per channel.
//! * [`odboa`] stores multi-shot signatures per orientation and matches bags.
//! * [`eval`] runs seeded trial experiments and computes CMC curves.

pub mod archive;
pub mod codebook;
pub mod config;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod features;
pub mod image;
pub mod metric;
pub mod odboa;
pub mod orientation;
mod par;
pub mod pyramid;
pub mod rng;

pub use error::{Error, Result};
pub use image::{CameraId, PersonId, PersonImage};
pub use orientation::OrientationLabel;
pub use rng::Seed;
