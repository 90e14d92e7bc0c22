//! End-to-end grid runner: one background model per frame-level feature
//! kind, per-utterance adapted models, SVM / NB / fused back-ends, and an
//! identification rate for every requested feature-set x system cell.
//!
//! Cell-scoped problems (a back-end that refuses to train, a score that
//! fails to normalize) are recorded in the grid and the remaining cells
//! still run. Configuration errors, split leakage, and artifact I/O
//! failures abort the whole run instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::audio::{apply_hamming, drop_low_energy_frames, frame_signal, load_wav, pre_emphasize};
use crate::classifiers::{nb_train, save_classifier, svm_train, ScoreVector, TrainedClassifier};
use crate::config::{derive_seed, ToolkitConfig};
use crate::error::{Error, Result};
use crate::experiment::manifest::{ExperimentManifest, ManifestEntry};
use crate::experiment::tables::{identification_rate, IdentificationRate};
use crate::experiment::{FeatureSet, SystemKind};
use crate::features::archive::read_archive;
use crate::features::{assemble_from_base, extract_base, FeatureKind, FeatureMatrix};
use crate::fusion::{concat_supervectors, fuse_scores_with_rule, FusionWeights};
use crate::gmm::{em_fit, map_adapt_means, save_model, Supervector};

/// Which cells to run and the master seed every stage derives from.
#[derive(Debug, Clone)]
pub struct GridRequest {
    pub features: Vec<FeatureSet>,
    pub systems: Vec<SystemKind>,
    pub seed: u64,
}

/// One scored test trial, written as a JSON line to the decisions log.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub utterance: String,
    pub truth: String,
    pub predicted: String,
    /// Normalized per-speaker scores backing the decision.
    pub scores: BTreeMap<String, f64>,
}

/// Outcome of one feature-set x system cell.
#[derive(Debug, Clone)]
pub enum CellOutcome {
    Rate(IdentificationRate),
    Failed(String),
}

/// One cell of the results grid.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub feature_set: FeatureSet,
    pub system: SystemKind,
    pub outcome: CellOutcome,
}

/// Every cell produced by one run, in feature-major order.
#[derive(Debug, Clone)]
pub struct ResultsGrid {
    pub corpus: String,
    pub seed: u64,
    pub features: Vec<FeatureSet>,
    pub systems: Vec<SystemKind>,
    pub cells: Vec<GridCell>,
}

impl ResultsGrid {
    pub fn cell(&self, feature: FeatureSet, system: SystemKind) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.feature_set == feature && c.system == system)
    }

    pub fn has_failures(&self) -> bool {
        self.cells
            .iter()
            .any(|c| matches!(c.outcome, CellOutcome::Failed(_)))
    }
}

/// Background model and adapted supervectors for one feature kind.
pub struct KindStage {
    pub ubm: crate::gmm::GmmModel,
    /// Train-split supervectors, aligned with `train_entries()` order.
    pub train: Vec<Supervector>,
    /// Test-split supervectors, aligned with `test_entries()` order.
    pub test: Vec<Supervector>,
}

/// Run the experiment grid on a fully split manifest.
///
/// Stages: leakage check, per-kind background model on the pooled train
/// frames, per-utterance mean adaptation on both splits, per-set back-end
/// training on the train supervectors, per-cell scoring of the test
/// split. When `out_dir` is given, background models, classifiers, and
/// per-cell decision logs are written beneath it.
pub fn run_grid(
    manifest: &ExperimentManifest,
    cfg: &ToolkitConfig,
    req: &GridRequest,
    out_dir: Option<&Path>,
) -> Result<ResultsGrid> {
    cfg.validate()?;
    let features = dedupe_sorted(&req.features);
    let systems = dedupe_sorted(&req.systems);
    if features.is_empty() || systems.is_empty() {
        return Err(Error::ConfigInvalid(
            "grid request needs at least one feature set and one system".into(),
        ));
    }
    if !manifest.is_split() {
        return Err(Error::ConfigInvalid(
            "manifest has unassigned utterances; split it before running".into(),
        ));
    }
    manifest.verify_no_leakage()?;
    if !manifest.meta.frames {
        cfg.frontend.validate_for_rate(manifest.meta.sample_rate)?;
    }

    let train = manifest.train_entries();
    let test = manifest.test_entries();
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData(
            "grid needs a non-empty train and test split".into(),
        ));
    }

    if let Some(dir) = out_dir {
        let decisions = dir.join("decisions");
        fs::create_dir_all(&decisions).map_err(|e| Error::io(decisions.clone(), e))?;
    }
    let config_hash = cfg.content_hash();

    // Stage 1: per-kind background models and adapted supervectors. A
    // kind that fails here poisons exactly the feature sets built on it.
    let kinds: BTreeSet<FeatureKind> = features
        .iter()
        .flat_map(|f| f.kinds().iter().copied())
        .collect();
    let mut kind_stages: BTreeMap<FeatureKind, std::result::Result<KindStage, String>> =
        BTreeMap::new();
    for &kind in &kinds {
        let outcome = kind_stage(manifest, cfg, req.seed, kind);
        if let (Some(dir), Ok(stage)) = (out_dir, &outcome) {
            save_model(
                &dir.join(format!("ubm.{}.json", kind.tag())),
                &stage.ubm,
                &config_hash,
            )?;
        }
        kind_stages.insert(kind, outcome.map_err(|e| e.to_string()));
    }

    let train_labels: Vec<String> = train.iter().map(|e| e.speaker_id.clone()).collect();

    // Stage 2+ 3: per feature set, assemble vectors, train the needed
    // back-ends, and score every requested system.
    let need_svm = systems
        .iter()
        .any(|s| matches!(s, SystemKind::Svm | SystemKind::Fused));
    let need_nb = systems
        .iter()
        .any(|s| matches!(s, SystemKind::Nb | SystemKind::Fused));

    let mut cells = Vec::with_capacity(features.len() * systems.len());
    for &fset in &features {
        let vectors = assemble_set_vectors(fset, &kind_stages, train.len(), test.len());
        let (train_vecs, test_vecs) = match vectors {
            Ok(pair) => pair,
            Err(message) => {
                for &system in &systems {
                    cells.push(GridCell {
                        feature_set: fset,
                        system,
                        outcome: CellOutcome::Failed(message.clone()),
                    });
                }
                continue;
            }
        };
        debug_assert!(train_vecs
            .iter()
            .all(|v| v.len() == fset.supervector_len(cfg)));

        let svm = if need_svm {
            Some(
                svm_train(
                    &train_vecs,
                    &train_labels,
                    &cfg.svm,
                    derive_seed(req.seed, &format!("svm:{}", fset.tag())),
                    config_hash,
                )
                .map(TrainedClassifier::Svm)
                .map_err(|e| e.to_string()),
            )
        } else {
            None
        };
        let nb = if need_nb {
            Some(
                nb_train(&train_vecs, &train_labels, &cfg.nb, config_hash)
                    .map(TrainedClassifier::Nb)
                    .map_err(|e| e.to_string()),
            )
        } else {
            None
        };
        if let Some(dir) = out_dir {
            if let Some(Ok(model)) = &svm {
                save_classifier(&dir.join(format!("svm.{}.json", fset.tag())), model)?;
            }
            if let Some(Ok(model)) = &nb {
                save_classifier(&dir.join(format!("nb.{}.json", fset.tag())), model)?;
            }
        }

        for &system in &systems {
            let outcome =
                score_cell(system, &svm, &nb, &test, &test_vecs, cfg).and_then(|trials| {
                    if let Some(dir) = out_dir {
                        write_decisions(dir, fset, system, &trials).map_err(|e| e.to_string())?;
                    }
                    identification_rate(
                        trials
                            .iter()
                            .map(|t| (t.truth.as_str(), t.predicted.as_str())),
                    )
                    .map_err(|e| e.to_string())
                });
            cells.push(GridCell {
                feature_set: fset,
                system,
                outcome: match outcome {
                    Ok(rate) => CellOutcome::Rate(rate),
                    Err(message) => CellOutcome::Failed(message),
                },
            });
        }
    }

    Ok(ResultsGrid {
        corpus: manifest.meta.corpus.clone(),
        seed: req.seed,
        features,
        systems,
        cells,
    })
}

fn dedupe_sorted<T: Ord + Copy>(items: &[T]) -> Vec<T> {
    let set: BTreeSet<T> = items.iter().copied().collect();
    set.into_iter().collect()
}

/// Frame-level features for one utterance: archive read for pre-extracted
/// corpora, full front-end pass for audio corpora.
pub fn utterance_features(
    manifest: &ExperimentManifest,
    cfg: &ToolkitConfig,
    entry: &ManifestEntry,
    kind: FeatureKind,
) -> Result<FeatureMatrix> {
    let base = if manifest.meta.frames {
        let archive = read_archive(&entry.frame_archive_path(kind))?;
        let m = archive.into_features()?;
        if m.kind() != kind.base() {
            return Err(Error::ArchiveFormat(format!(
                "utterance {}: archive holds {} frames, expected {}",
                entry.utterance_id,
                m.kind(),
                kind.base()
            )));
        }
        if m.dims() != kind.base().dims(&cfg.frontend) {
            return Err(Error::ArchiveFormat(format!(
                "utterance {}: archive dimensionality {} does not match the configured {}",
                entry.utterance_id,
                m.dims(),
                kind.base().dims(&cfg.frontend)
            )));
        }
        m
    } else {
        let buf = load_wav(&entry.path)?;
        if buf.sample_rate != manifest.meta.sample_rate {
            return Err(Error::UnsupportedFormat(format!(
                "utterance {}: sample rate {} does not match the manifest rate {}",
                entry.utterance_id, buf.sample_rate, manifest.meta.sample_rate
            )));
        }
        let emphasized = pre_emphasize(&buf, cfg.frontend.pre_emphasis);
        let frames = frame_signal(&emphasized, cfg.frontend.window_ms, cfg.frontend.hop_ms);
        let mut windowed = apply_hamming(&frames);
        if let Some(threshold_db) = cfg.frontend.silence_drop_db {
            windowed = drop_low_energy_frames(&windowed, threshold_db);
        }
        extract_base(kind.base(), &windowed, &cfg.frontend)?
    };
    Ok(assemble_from_base(kind, &base, &cfg.frontend))
}

/// Train the background model for one kind on the pooled train frames
/// and adapt every utterance of both splits to it.
pub fn kind_stage(
    manifest: &ExperimentManifest,
    cfg: &ToolkitConfig,
    seed: u64,
    kind: FeatureKind,
) -> Result<KindStage> {
    let train = manifest.train_entries();
    let test = manifest.test_entries();
    let train_feats: Vec<FeatureMatrix> = train
        .iter()
        .map(|e| utterance_features(manifest, cfg, e, kind))
        .collect::<Result<_>>()?;

    let dims = kind.dims(&cfg.frontend);
    let mut pool = FeatureMatrix::new(kind, dims);
    for feat in &train_feats {
        for row in feat.rows() {
            pool.push_row(row);
        }
    }
    let (ubm, _report) = em_fit(
        &pool,
        &cfg.em,
        derive_seed(seed, &format!("ubm:{}", kind.tag())),
    )?;

    let adapt =
        |entries: &[&ManifestEntry], feats: Vec<FeatureMatrix>| -> Result<Vec<Supervector>> {
            entries
                .iter()
                .zip(feats)
                .map(|(entry, feat)| {
                    let model = map_adapt_means(&ubm, &feat, &cfg.map)?;
                    Ok(model
                        .supervector(cfg.supervector.kl_scaling)
                        .tagged(&entry.utterance_id))
                })
                .collect()
        };

    let train_sv = adapt(&train, train_feats)?;
    assert_eq!(
        train_sv.len(),
        train.len(),
        "one adapted model per train utterance"
    );
    let test_feats: Vec<FeatureMatrix> = test
        .iter()
        .map(|e| utterance_features(manifest, cfg, e, kind))
        .collect::<Result<_>>()?;
    let test_sv = adapt(&test, test_feats)?;

    Ok(KindStage {
        ubm,
        train: train_sv,
        test: test_sv,
    })
}

/// Pull the feature set's train/test design matrices out of the per-kind
/// supervectors, concatenating for two-stream sets.
#[allow(clippy::type_complexity)]
fn assemble_set_vectors(
    fset: FeatureSet,
    kind_stages: &BTreeMap<FeatureKind, std::result::Result<KindStage, String>>,
    n_train: usize,
    n_test: usize,
) -> std::result::Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), String> {
    let resolved: Vec<&KindStage> = fset
        .kinds()
        .iter()
        .map(|kind| match kind_stages.get(kind) {
            Some(Ok(v)) => Ok(v),
            Some(Err(message)) => Err(format!("{kind} stage failed: {message}")),
            None => unreachable!("kind stage runs before assembly"),
        })
        .collect::<std::result::Result<_, String>>()?;

    let stack = |side: fn(&KindStage) -> &[Supervector],
                 n: usize|
     -> std::result::Result<Vec<Vec<f64>>, String> {
        (0..n)
            .map(|i| match resolved.as_slice() {
                [one] => Ok(side(one)[i].values.clone()),
                [a, b] => concat_supervectors(&side(a)[i], &side(b)[i])
                    .map(|fused| fused.values)
                    .map_err(|e| e.to_string()),
                _ => unreachable!("feature sets combine at most two streams"),
            })
            .collect()
    };

    let train = stack(|v| &v.train, n_train)?;
    let test = stack(|v| &v.test, n_test)?;
    Ok((train, test))
}

/// Score every test utterance with the cell's system and collect the
/// decisions.
fn score_cell(
    system: SystemKind,
    svm: &Option<std::result::Result<TrainedClassifier, String>>,
    nb: &Option<std::result::Result<TrainedClassifier, String>>,
    test: &[&ManifestEntry],
    test_vecs: &[Vec<f64>],
    cfg: &ToolkitConfig,
) -> std::result::Result<Vec<TrialRecord>, String> {
    let resolve = |side: &Option<std::result::Result<TrainedClassifier, String>>,
                   name: &str|
     -> std::result::Result<TrainedClassifier, String> {
        match side {
            Some(Ok(model)) => Ok(model.clone()),
            Some(Err(message)) => Err(format!("{name} training failed: {message}")),
            None => unreachable!("back-end trained before scoring"),
        }
    };

    let score = |x: &[f64]| -> std::result::Result<ScoreVector, String> {
        match system {
            SystemKind::Svm => resolve(svm, "SVM")?.score(x).map_err(|e| e.to_string()),
            SystemKind::Nb => resolve(nb, "NB")?.score(x).map_err(|e| e.to_string()),
            SystemKind::Fused => {
                let s_svm = resolve(svm, "SVM")?.score(x).map_err(|e| e.to_string())?;
                let s_nb = resolve(nb, "NB")?.score(x).map_err(|e| e.to_string())?;
                fuse_scores_with_rule(
                    &s_svm,
                    &s_nb,
                    FusionWeights::from(&cfg.fusion),
                    cfg.fusion.rule,
                )
                .map_err(|e| e.to_string())
            }
        }
    };

    test.iter()
        .zip(test_vecs)
        .map(|(entry, x)| {
            let scores = score(x)?;
            let predicted = scores.decide().map_err(|e| e.to_string())?.to_string();
            Ok(TrialRecord {
                utterance: entry.utterance_id.clone(),
                truth: entry.speaker_id.clone(),
                predicted,
                scores: scores
                    .entries()
                    .iter()
                    .map(|(label, value)| (label.clone(), *value))
                    .collect(),
            })
        })
        .collect()
}

/// Write one cell's decisions as JSON lines, atomically.
fn write_decisions(
    out_dir: &Path,
    fset: FeatureSet,
    system: SystemKind,
    trials: &[TrialRecord],
) -> Result<()> {
    let mut body = String::new();
    for trial in trials {
        body.push_str(&serde_json::to_string(trial)?);
        body.push('\n');
    }
    let path = out_dir
        .join("decisions")
        .join(format!("{}.s{}.jsonl", fset.tag(), system.number()));
    let tmp = path.with_extension("jsonl.tmp");
    fs::write(&tmp, body).map_err(|e| Error::io(tmp.clone(), e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(path, e))?;
    Ok(())
}
