//! JSON-lines corpus manifests and the train/test split protocol.
//!
//! Line 1 is corpus metadata, every following line one utterance:
//!
//! ```text
//! {"corpus":"demo","sample_rate":16000}
//! {"speaker_id":"s01","utterance_id":"s01_u01","path":"audio/s01_u01.wav","split":"train"}
//! {"speaker_id":"s01","utterance_id":"s01_u02","path":"audio/s01_u02.wav"}
//! ```
//!
//! Metadata with `"frames": true` marks a corpus of pre-extracted
//! frame archives: `path` is then a base path and `<path>.mfcc.fea`
//! plus `<path>.rastaplp.fea` must both exist. Relative paths resolve
//! against the manifest's directory. Entries may pre-assign splits;
//! unassigned entries are distributed by [`ExperimentManifest::auto_split`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, SplitConfig};
use crate::error::{Error, Result};
use crate::features::FeatureKind;

/// Which side of the experiment an utterance feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One utterance of the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub speaker_id: String,
    pub utterance_id: String,
    /// Audio file, or archive base path for a frames corpus. Resolved
    /// against the manifest directory at load time.
    pub path: PathBuf,
    pub split: Option<Split>,
    /// The same sentence exists for every speaker; the split protocol
    /// can be told to keep such utterances out of the test side.
    pub shared_text: bool,
}

impl ManifestEntry {
    /// Archive file holding this utterance's frames of a base kind.
    pub fn frame_archive_path(&self, kind: FeatureKind) -> PathBuf {
        let base = kind.base();
        PathBuf::from(format!(
            "{}.{}.fea",
            self.path.to_string_lossy(),
            base.tag()
        ))
    }
}

/// Corpus-wide metadata from the manifest header line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub corpus: String,
    pub sample_rate: u32,
    /// Paths point at frame archives instead of audio.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub frames: bool,
}

/// A validated corpus description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub meta: CorpusMeta,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryLine {
    speaker_id: String,
    utterance_id: String,
    path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    shared_text: bool,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::ManifestParse {
        line,
        message: message.into(),
    }
}

/// Load and validate a manifest.
///
/// Checks performed here: parseable lines, non-empty ids, unique
/// utterance ids, and existence of every referenced file (both frame
/// archives for a frames corpus).
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (header_no, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_error(1, "empty manifest"))?;
    let meta: CorpusMeta =
        serde_json::from_str(header).map_err(|e| parse_error(header_no, e.to_string()))?;
    if meta.sample_rate == 0 {
        return Err(parse_error(header_no, "sample_rate must be positive"));
    }

    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let raw: EntryLine =
            serde_json::from_str(line).map_err(|e| parse_error(no, e.to_string()))?;
        if raw.speaker_id.is_empty() || raw.utterance_id.is_empty() || raw.path.is_empty() {
            return Err(parse_error(
                no,
                "speaker_id, utterance_id, and path must be non-empty",
            ));
        }
        if !seen.insert(raw.utterance_id.clone()) {
            return Err(Error::DuplicateUtterance(raw.utterance_id));
        }
        entries.push(ManifestEntry {
            speaker_id: raw.speaker_id,
            utterance_id: raw.utterance_id,
            path: base_dir.join(raw.path),
            split: raw.split,
            shared_text: raw.shared_text,
        });
    }
    if entries.is_empty() {
        return Err(parse_error(header_no, "manifest has no utterance entries"));
    }

    let manifest = ExperimentManifest { meta, entries };
    manifest.check_files_exist()?;
    Ok(manifest)
}

impl ExperimentManifest {
    fn check_files_exist(&self) -> Result<()> {
        for e in &self.entries {
            let required: Vec<PathBuf> = if self.meta.frames {
                vec![
                    e.frame_archive_path(FeatureKind::Mfcc),
                    e.frame_archive_path(FeatureKind::RastaPlp),
                ]
            } else {
                vec![e.path.clone()]
            };
            for p in required {
                if !p.is_file() {
                    return Err(Error::MissingAudio {
                        utterance: e.utterance_id.clone(),
                        path: p,
                    });
                }
            }
        }
        Ok(())
    }

    /// Write the manifest as JSON lines, atomically. Paths are written
    /// as stored, so build entries with relative paths for a portable
    /// corpus.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = serde_json::to_string(&self.meta)?;
        out.push('\n');
        for e in &self.entries {
            let line = EntryLine {
                speaker_id: e.speaker_id.clone(),
                utterance_id: e.utterance_id.clone(),
                path: e.path.to_string_lossy().into_owned(),
                split: e.split,
                shared_text: e.shared_text,
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        let parent = path.parent().unwrap_or_else(|| Path::new("."));
        let tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
        std::fs::write(tmp.path(), out).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    /// Training entries, ordered by utterance id.
    pub fn train_entries(&self) -> Vec<&ManifestEntry> {
        self.side(Split::Train)
    }

    /// Test entries, ordered by utterance id.
    pub fn test_entries(&self) -> Vec<&ManifestEntry> {
        self.side(Split::Test)
    }

    fn side(&self, split: Split) -> Vec<&ManifestEntry> {
        let mut v: Vec<&ManifestEntry> = self
            .entries
            .iter()
            .filter(|e| e.split == Some(split))
            .collect();
        v.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        v
    }

    /// Sorted distinct speakers appearing on the training side.
    pub fn train_speakers(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|e| e.split == Some(Split::Train))
            .map(|e| e.speaker_id.as_str())
            .collect();
        set.into_iter().collect()
    }

    /// Whether both sides of the experiment are populated.
    pub fn is_split(&self) -> bool {
        let mut train = false;
        let mut test = false;
        for e in &self.entries {
            match e.split {
                Some(Split::Train) => train = true,
                Some(Split::Test) => test = true,
                None => {}
            }
        }
        train && test
    }

    /// Assign splits to unassigned utterances, per speaker.
    ///
    /// For each speaker the unassigned utterances are sorted by id,
    /// shuffled with a per-speaker seed, and the first `test_per_speaker`
    /// become test items; of the rest, up to `train_per_speaker` become
    /// training items and any overflow stays unassigned (excluded from
    /// the experiment). Pre-assigned entries are never touched, and the
    /// result is independent of manifest entry order.
    pub fn auto_split(&mut self, cfg: &SplitConfig, seed: u64) -> Result<()> {
        cfg.validate()?;
        let mut by_speaker: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.split.is_none() {
                by_speaker.entry(e.speaker_id.clone()).or_default().push(i);
            }
        }
        let needed = cfg.train_per_speaker + cfg.test_per_speaker;
        for (speaker, mut idx) in by_speaker {
            if idx.len() < needed {
                return Err(Error::InsufficientUtterances {
                    speaker,
                    available: idx.len(),
                    required: needed,
                });
            }
            if cfg.exclude_shared_text_from_test {
                let eligible = idx
                    .iter()
                    .filter(|&&i| !self.entries[i].shared_text)
                    .count();
                if eligible < cfg.test_per_speaker {
                    return Err(Error::InsufficientUtterances {
                        speaker,
                        available: eligible,
                        required: cfg.test_per_speaker,
                    });
                }
            }
            idx.sort_by(|&a, &b| {
                self.entries[a]
                    .utterance_id
                    .cmp(&self.entries[b].utterance_id)
            });
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("split:{speaker}")));
            idx.shuffle(&mut rng);

            let mut test_left = cfg.test_per_speaker;
            let mut train_left = cfg.train_per_speaker;
            for i in idx {
                let entry = &mut self.entries[i];
                if test_left > 0 && !(cfg.exclude_shared_text_from_test && entry.shared_text) {
                    entry.split = Some(Split::Test);
                    test_left -= 1;
                } else if train_left > 0 {
                    entry.split = Some(Split::Train);
                    train_left -= 1;
                }
            }
            debug_assert_eq!(test_left, 0);
        }
        Ok(())
    }

    /// Guard against test data reaching any training stage.
    ///
    /// Rejects a manifest when the two sides share an utterance id or
    /// when two differently named utterances alias the same file on
    /// disk (resolved through symlinks where possible).
    pub fn verify_no_leakage(&self) -> Result<()> {
        let canonical = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());

        let train_ids: BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|e| e.split == Some(Split::Train))
            .map(|e| e.utterance_id.as_str())
            .collect();
        let mut train_paths: BTreeMap<PathBuf, &str> = BTreeMap::new();
        for e in &self.entries {
            if e.split == Some(Split::Train) {
                train_paths.insert(canonical(&e.path), &e.utterance_id);
            }
        }
        for e in &self.entries {
            if e.split != Some(Split::Test) {
                continue;
            }
            if train_ids.contains(e.utterance_id.as_str()) {
                return Err(Error::LeakageDetected {
                    utterance: e.utterance_id.clone(),
                    stage: "background model".into(),
                });
            }
            if train_paths.contains_key(&canonical(&e.path)) {
                return Err(Error::LeakageDetected {
                    utterance: e.utterance_id.clone(),
                    stage: "background model".into(),
                });
            }
        }
        Ok(())
    }
}
