//! Text-independent speaker identification.
//!
//! The pipeline: audio (or pre-extracted cepstra) → frame-level feature
//! sets → universal background model → per-utterance adapted models →
//! supervectors → linear-SVM and naive-Bayes back-ends → optional score
//! fusion → identification rates over a manifest-described corpus.
//!
//! Modules follow the pipeline order:
//!
//! - [`audio`]: WAV ingestion, pre-emphasis, framing, windowing
//! - [`features`]: mel and perceptual cepstra, Δ/ΔΔ, archives
//! - [`gmm`]: diagonal-covariance mixtures, EM, mean adaptation,
//!   supervectors
//! - [`classifiers`]: min-max scaling, pairwise linear SVMs, Gaussian
//!   naive Bayes
//! - [`fusion`]: supervector concatenation and score combination
//! - [`experiment`]: manifests, splits, the feature × system grid, and
//!   table emission

// Numeric kernels walk parallel buffers by index; iterator rewrites
// obscure the adjacent-element and cross-buffer arithmetic.
#![allow(clippy::needless_range_loop)]

pub mod audio;
pub mod classifiers;
pub mod config;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fusion;
pub mod gmm;

pub use audio::{FrameMatrix, SampleBuffer};
pub use classifiers::ScoreVector;
pub use config::{derive_seed, ToolkitConfig};
pub use error::{Error, Result};
pub use experiment::{ExperimentManifest, IdentificationRate, ResultsGrid};
pub use features::{FeatureKind, FeatureMatrix};
pub use gmm::{GmmModel, Supervector};
