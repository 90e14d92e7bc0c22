//! Corpus manifests, train/test splitting, the feature-set × system
//! evaluation grid, and identification-rate reporting.
//!
//! A corpus is described by a JSON-lines manifest; utterances carry
//! either audio paths or base paths to pre-extracted frame archives.
//! The grid runner trains one background model per feature kind on the
//! training side, adapts one model per training utterance, and scores
//! every test utterance with the requested back-ends.

mod grid;
mod manifest;
mod synth;
mod tables;

pub use grid::{
    kind_stage, run_grid, utterance_features, CellOutcome, GridCell, GridRequest, KindStage,
    ResultsGrid, TrialRecord,
};
pub use manifest::{load_manifest, CorpusMeta, ExperimentManifest, ManifestEntry, Split};
pub use synth::{synth_corpus, SynthSpec};
pub use tables::{emit_tables, identification_rate, IdentificationRate, OutputFormat};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ToolkitConfig;
use crate::error::Error;
use crate::features::FeatureKind;

/// The five evaluated feature sets: plain coefficients (F1, F2), their
/// delta-extended forms (F3, F4), and the fused supervector (F5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    F1,
    F2,
    F3,
    F4,
    F5,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::F1,
        FeatureSet::F2,
        FeatureSet::F3,
        FeatureSet::F4,
        FeatureSet::F5,
    ];

    /// Frame-level feature kinds this set's models are trained on.
    /// F5 pools supervectors from both base kinds.
    pub fn kinds(self) -> &'static [FeatureKind] {
        match self {
            FeatureSet::F1 => &[FeatureKind::Mfcc],
            FeatureSet::F2 => &[FeatureKind::RastaPlp],
            FeatureSet::F3 => &[FeatureKind::MfccDeltas],
            FeatureSet::F4 => &[FeatureKind::RastaPlpDeltas],
            FeatureSet::F5 => &[FeatureKind::Mfcc, FeatureKind::RastaPlp],
        }
    }

    /// Expected supervector width under a given configuration.
    pub fn supervector_len(self, cfg: &ToolkitConfig) -> usize {
        self.kinds()
            .iter()
            .map(|k| cfg.em.components * k.dims(&cfg.frontend))
            .sum()
    }

    /// Lower-case tag used in artifact file names.
    pub fn tag(self) -> &'static str {
        match self {
            FeatureSet::F1 => "f1",
            FeatureSet::F2 => "f2",
            FeatureSet::F3 => "f3",
            FeatureSet::F4 => "f4",
            FeatureSet::F5 => "f5",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", *self as usize + 1)
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "F1" | "1" => Ok(FeatureSet::F1),
            "F2" | "2" => Ok(FeatureSet::F2),
            "F3" | "3" => Ok(FeatureSet::F3),
            "F4" | "4" => Ok(FeatureSet::F4),
            "F5" | "5" => Ok(FeatureSet::F5),
            other => Err(Error::ConfigInvalid(format!(
                "unknown feature set {other:?}; expected F1..F5"
            ))),
        }
    }
}

/// The three evaluated systems: the support vector machine, naive
/// Bayes, and their score-level fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Svm,
    Nb,
    Fused,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [SystemKind::Svm, SystemKind::Nb, SystemKind::Fused];

    pub fn number(self) -> u8 {
        match self {
            SystemKind::Svm => 1,
            SystemKind::Nb => 2,
            SystemKind::Fused => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SystemKind::Svm => "svm",
            SystemKind::Nb => "nb",
            SystemKind::Fused => "fused",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemKind::Svm => write!(f, "System 1 (SVM)"),
            SystemKind::Nb => write!(f, "System 2 (NB)"),
            SystemKind::Fused => write!(f, "System 3 (fused)"),
        }
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "svm" => Ok(SystemKind::Svm),
            "2" | "nb" => Ok(SystemKind::Nb),
            "3" | "fused" | "fusion" => Ok(SystemKind::Fused),
            other => Err(Error::ConfigInvalid(format!(
                "unknown system {other:?}; expected 1..3, svm, nb, or fused"
            ))),
        }
    }
}
