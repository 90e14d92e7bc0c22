//! Closed-set speaker classifiers operating on supervectors.
//!
//! Two back-ends share one interface: a linear support vector machine
//! arranged one-vs-one, and a Gaussian naive Bayes model. Both score an
//! unknown vector into a [`ScoreVector`], a posterior-like distribution
//! over the enrolled speakers, and both serialize to a common JSON
//! document gated by the configuration hash.

mod nb;
mod scaler;
mod svm;

pub use nb::{nb_train, NbModel};
pub use scaler::MinMaxScaler;
pub use svm::{smo_train, svm_train, BinarySvm, SmoOutcome, SmoProblem, SvmModel};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{hash_to_hex, hex_to_hash};
use crate::error::{Error, Result};

/// Normalized per-speaker scores for one test utterance.
///
/// Entries are sorted by speaker label and sum to one. Margins, when
/// present, carry the accumulated decision-function values used to
/// break voting ties; they are aligned with the entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    entries: Vec<(String, f64)>,
    margins: Option<Vec<f64>>,
}

impl ScoreVector {
    /// Build from (speaker, score) pairs; sorts by speaker label.
    pub fn new(mut entries: Vec<(String, f64)>, mut margins: Option<Vec<f64>>) -> Self {
        if let Some(m) = &mut margins {
            assert_eq!(m.len(), entries.len(), "margins must align with entries");
            let mut order: Vec<usize> = (0..entries.len()).collect();
            order.sort_by(|&a, &b| entries[a].0.cmp(&entries[b].0));
            let reordered: Vec<f64> = order.iter().map(|&i| m[i]).collect();
            *m = reordered;
            let reordered_entries: Vec<(String, f64)> =
                order.into_iter().map(|i| entries[i].clone()).collect();
            entries = reordered_entries;
        } else {
            entries.sort_by(|a, b| a.0.cmp(&b.0));
        }
        ScoreVector { entries, margins }
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn margins(&self) -> Option<&[f64]> {
        self.margins.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Speaker labels in sorted order.
    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(s, _)| s.as_str())
    }

    pub fn score_for(&self, speaker: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|(s, _)| s.as_str().cmp(speaker))
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Verify the scores form a distribution within `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let sum: f64 = self.entries.iter().map(|(_, s)| s).sum();
        if !sum.is_finite() || (sum - 1.0).abs() > tol {
            return Err(Error::NotNormalized(format!("scores sum to {sum}")));
        }
        if let Some((speaker, s)) = self
            .entries
            .iter()
            .find(|(_, s)| !s.is_finite() || *s < 0.0)
        {
            return Err(Error::NotNormalized(format!(
                "score {s} for {speaker} is negative or non-finite"
            )));
        }
        Ok(())
    }

    /// Pick the winning speaker: highest score, then largest margin,
    /// then the lowest speaker index in label order.
    pub fn decide(&self) -> Result<&str> {
        if self.entries.is_empty() {
            return Err(Error::EmptyScores);
        }
        let mut best = 0;
        for i in 1..self.entries.len() {
            let (score, best_score) = (self.entries[i].1, self.entries[best].1);
            if score > best_score {
                best = i;
            } else if score == best_score {
                if let Some(m) = &self.margins {
                    if m[i] > m[best] {
                        best = i;
                    }
                }
            }
        }
        Ok(&self.entries[best].0)
    }
}

/// Reject empty input, single-class input, and non-finite values.
/// Returns the sorted distinct class labels.
pub(crate) fn validate_training_set(
    vectors: &[Vec<f64>],
    labels: &[String],
) -> Result<Vec<String>> {
    if vectors.is_empty() || labels.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    assert_eq!(
        vectors.len(),
        labels.len(),
        "every training vector needs a label"
    );
    let dims = vectors[0].len();
    for (v, row) in vectors.iter().enumerate() {
        if row.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: row.len(),
            });
        }
        for (d, x) in row.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFiniteFeature { vector: v, dim: d });
            }
        }
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClassInput);
    }
    Ok(classes)
}

/// Either trained back-end, as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedClassifier {
    Svm(SvmModel),
    Nb(NbModel),
}

impl TrainedClassifier {
    pub fn score(&self, x: &[f64]) -> Result<ScoreVector> {
        match self {
            TrainedClassifier::Svm(m) => m.score(x),
            TrainedClassifier::Nb(m) => m.score(x),
        }
    }

    pub fn classes(&self) -> &[String] {
        match self {
            TrainedClassifier::Svm(m) => m.classes(),
            TrainedClassifier::Nb(m) => m.classes(),
        }
    }

    pub fn config_hash(&self) -> &[u8; 32] {
        match self {
            TrainedClassifier::Svm(m) => m.config_hash(),
            TrainedClassifier::Nb(m) => m.config_hash(),
        }
    }
}

/// On-disk form shared by both back-ends. `machines` is present for
/// the support vector machine, `nb_params` for naive Bayes.
#[derive(Debug, Serialize, Deserialize)]
struct ClassifierDocument {
    version: u32,
    kind: String,
    classes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaler: Option<ScalerDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    machines: Option<Vec<MachineDocument>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nb_params: Option<NbParamsDocument>,
    config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScalerDocument {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MachineDocument {
    /// Index into `classes` of the speaker a positive decision favors.
    first: usize,
    /// Index into `classes` of the speaker a negative decision favors.
    second: usize,
    weights: Vec<f64>,
    bias: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct NbParamsDocument {
    priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

const CLASSIFIER_DOC_VERSION: u32 = 1;

/// Write a classifier document atomically.
pub fn save_classifier(path: &Path, model: &TrainedClassifier) -> Result<()> {
    let doc = match model {
        TrainedClassifier::Svm(m) => ClassifierDocument {
            version: CLASSIFIER_DOC_VERSION,
            kind: "svm".into(),
            classes: m.classes().to_vec(),
            scaler: Some(ScalerDocument {
                mins: m.scaler().mins().to_vec(),
                maxs: m.scaler().maxs().to_vec(),
            }),
            machines: Some(
                m.machines()
                    .iter()
                    .map(|pm| MachineDocument {
                        first: pm.first,
                        second: pm.second,
                        weights: pm.svm.weights.clone(),
                        bias: pm.svm.bias,
                    })
                    .collect(),
            ),
            nb_params: None,
            config_hash: hash_to_hex(m.config_hash()),
        },
        TrainedClassifier::Nb(m) => ClassifierDocument {
            version: CLASSIFIER_DOC_VERSION,
            kind: "nb".into(),
            classes: m.classes().to_vec(),
            scaler: None,
            machines: None,
            nb_params: Some(NbParamsDocument {
                priors: m.priors().to_vec(),
                means: m.class_means().to_vec(),
                variances: m.class_variances().to_vec(),
            }),
            config_hash: hash_to_hex(m.config_hash()),
        },
    };
    let json = serde_json::to_string_pretty(&doc)?;
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
    std::fs::write(tmp.path(), json).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Read a classifier document, optionally insisting on a config hash.
pub fn load_classifier(path: &Path, expected_hash: Option<&[u8; 32]>) -> Result<TrainedClassifier> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let doc: ClassifierDocument = serde_json::from_str(&text)?;
    if doc.version != CLASSIFIER_DOC_VERSION {
        return Err(Error::ArchiveFormat(format!(
            "unsupported classifier document version {}",
            doc.version
        )));
    }
    let hash = hex_to_hash(&doc.config_hash)
        .map_err(|_| Error::ArchiveFormat("malformed config hash".into()))?;
    if let Some(expected) = expected_hash {
        if &hash != expected {
            return Err(Error::ConfigHashMismatch(format!(
                "classifier was trained under configuration {}",
                doc.config_hash
            )));
        }
    }
    match doc.kind.as_str() {
        "svm" => {
            let scaler_doc = doc
                .scaler
                .ok_or_else(|| Error::ArchiveFormat("svm document without scaler".into()))?;
            let machines_doc = doc
                .machines
                .ok_or_else(|| Error::ArchiveFormat("svm document without machines".into()))?;
            let scaler = MinMaxScaler::from_bounds(scaler_doc.mins, scaler_doc.maxs)
                .ok_or_else(|| Error::ArchiveFormat("inconsistent scaler bounds".into()))?;
            let expected = doc.classes.len() * (doc.classes.len() - 1) / 2;
            if machines_doc.len() != expected {
                return Err(Error::ArchiveFormat(format!(
                    "expected {expected} pairwise machines, found {}",
                    machines_doc.len()
                )));
            }
            let mut machines = Vec::with_capacity(machines_doc.len());
            for md in machines_doc {
                if md.first >= md.second || md.second >= doc.classes.len() {
                    return Err(Error::ArchiveFormat("bad machine class pair".into()));
                }
                if md.weights.len() != scaler.dims() || !md.bias.is_finite() {
                    return Err(Error::ArchiveFormat("bad machine parameters".into()));
                }
                machines.push(svm::PairMachine {
                    first: md.first,
                    second: md.second,
                    svm: BinarySvm {
                        weights: md.weights,
                        bias: md.bias,
                    },
                });
            }
            Ok(TrainedClassifier::Svm(SvmModel::from_parts(
                doc.classes,
                scaler,
                machines,
                hash,
            )))
        }
        "nb" => {
            let params = doc
                .nb_params
                .ok_or_else(|| Error::ArchiveFormat("nb document without parameters".into()))?;
            NbModel::from_parts(
                doc.classes,
                params.priors,
                params.means,
                params.variances,
                hash,
            )
            .map(TrainedClassifier::Nb)
        }
        other => Err(Error::ArchiveFormat(format!(
            "unknown classifier kind {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(pairs: &[(&str, f64)]) -> ScoreVector {
        ScoreVector::new(
            pairs.iter().map(|(s, x)| (s.to_string(), *x)).collect(),
            None,
        )
    }

    #[test]
    fn entries_are_sorted_and_findable() {
        let s = sv(&[("s03", 0.2), ("s01", 0.5), ("s02", 0.3)]);
        let labels: Vec<&str> = s.speakers().collect();
        assert_eq!(labels, ["s01", "s02", "s03"]);
        assert_eq!(s.score_for("s02"), Some(0.3));
        assert_eq!(s.score_for("s09"), None);
    }

    #[test]
    fn margins_follow_the_sort() {
        let s = ScoreVector::new(
            vec![("b".into(), 0.5), ("a".into(), 0.5)],
            Some(vec![2.0, -1.0]),
        );
        assert_eq!(s.margins(), Some(&[-1.0, 2.0][..]));
        // Equal scores: the larger margin wins.
        assert_eq!(s.decide().unwrap(), "b");
    }

    #[test]
    fn decide_prefers_score_then_margin_then_order() {
        let top = sv(&[("a", 0.2), ("b", 0.5), ("c", 0.3)]);
        assert_eq!(top.decide().unwrap(), "b");

        // Full tie with no margins: lowest label index.
        let tie = sv(&[("x", 0.5), ("w", 0.5)]);
        assert_eq!(tie.decide().unwrap(), "w");

        // Full tie including margins: still the lowest index.
        let tie2 = ScoreVector::new(
            vec![("a".into(), 0.5), ("b".into(), 0.5)],
            Some(vec![1.0, 1.0]),
        );
        assert_eq!(tie2.decide().unwrap(), "a");
    }

    #[test]
    fn empty_scores_are_an_error() {
        let s = ScoreVector::new(vec![], None);
        assert!(matches!(s.decide(), Err(Error::EmptyScores)));
    }

    #[test]
    fn normalization_check_catches_bad_sums() {
        assert!(sv(&[("a", 0.6), ("b", 0.4)]).check_normalized(1e-9).is_ok());
        assert!(matches!(
            sv(&[("a", 0.6), ("b", 0.6)]).check_normalized(1e-9),
            Err(Error::NotNormalized(_))
        ));
        assert!(matches!(
            sv(&[("a", 1.5), ("b", -0.5)]).check_normalized(1e-9),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn single_class_and_empty_sets_are_rejected() {
        let err = validate_training_set(&[], &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyTrainingSet));

        let vectors = vec![vec![1.0], vec![2.0]];
        let labels = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            validate_training_set(&vectors, &labels),
            Err(Error::SingleClassInput)
        ));
    }

    #[test]
    fn non_finite_vectors_are_located() {
        let vectors = vec![vec![1.0, 2.0], vec![3.0, f64::NAN]];
        let labels = vec!["a".to_string(), "b".to_string()];
        match validate_training_set(&vectors, &labels) {
            Err(Error::NonFiniteFeature { vector, dim }) => {
                assert_eq!((vector, dim), (1, 1));
            }
            other => panic!("expected NonFiniteFeature, got {other:?}"),
        }
    }
}
