//! Synthetic frame corpus for end-to-end pipeline checks.
//!
//! The corpus mimics how spectral features actually carry identity:
//! all speakers share a handful of anchor regions (the common acoustic
//! space), and each speaker's mixture displaces those anchors by a
//! speaker-specific offset and reweights them. Utterances are i.i.d.
//! frame samples from the speaker's mixture, written as the pair of
//! frame archives a `frames: true` manifest points at.
//!
//! The shared-anchor layout matters. A background model fitted on the
//! pooled training frames captures the anchors; adapting it to one
//! utterance then moves component means by that speaker's displacement,
//! which is exactly the supervector signal the back-ends are built to
//! separate. Giving every speaker a private region instead lets a
//! large background model memorize each speaker's clusters outright,
//! leaving supervectors that differ only in occupancy noise. The
//! displacements are large relative to estimation noise, so a correct
//! pipeline identifies speakers almost perfectly; a mixed-up split,
//! scaler, or score normalization shows up as an immediate accuracy
//! collapse.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{derive_seed, FrontendConfig};
use crate::error::Result;
use crate::experiment::manifest::{CorpusMeta, ExperimentManifest, ManifestEntry};
use crate::features::archive::{write_archive, Archive, ArchiveMeta};
use crate::features::{FeatureKind, FeatureMatrix};

/// Shape of the generated corpus.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub frames_per_utterance: usize,
    /// Mixture components per speaker model.
    pub components: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            speakers: 10,
            utterances_per_speaker: 10,
            frames_per_utterance: 200,
            components: 4,
            seed: 42,
        }
    }
}

/// Anchor regions one stream's speakers displace: the shared acoustic
/// space of the corpus.
struct StreamAnchors {
    means: Vec<Vec<f64>>,
    stddevs: Vec<Vec<f64>>,
}

impl StreamAnchors {
    fn draw(rng: &mut ChaCha8Rng, components: usize, dims: usize) -> StreamAnchors {
        let mut means = Vec::with_capacity(components);
        let mut stddevs = Vec::with_capacity(components);
        for _ in 0..components {
            means.push((0..dims).map(|_| rng.random_range(-8.0..8.0)).collect());
            stddevs.push(
                (0..dims)
                    .map(|_| rng.random_range(0.5..1.5f64).sqrt())
                    .collect(),
            );
        }
        StreamAnchors { means, stddevs }
    }
}

/// One speaker's generating mixture for a single stream.
struct SpeakerMixture {
    means: Vec<Vec<f64>>,
    stddevs: Vec<Vec<f64>>,
    /// Cumulative component weights for sampling.
    cumulative: Vec<f64>,
}

/// Per-dimension half-range of the speaker displacement away from the
/// anchors, roughly 1.5x the anchor spread.
const DISPLACEMENT: f64 = 1.5;

impl SpeakerMixture {
    /// Displace the anchors for one speaker: offset every component
    /// mean, rescale its spread a little, and reweight the components.
    fn draw(rng: &mut ChaCha8Rng, anchors: &StreamAnchors) -> SpeakerMixture {
        let mut means = Vec::with_capacity(anchors.means.len());
        let mut stddevs = Vec::with_capacity(anchors.means.len());
        let mut raw_weights = Vec::with_capacity(anchors.means.len());
        for (mean, stddev) in anchors.means.iter().zip(&anchors.stddevs) {
            means.push(
                mean.iter()
                    .map(|m| m + rng.random_range(-DISPLACEMENT..DISPLACEMENT))
                    .collect(),
            );
            stddevs.push(
                stddev
                    .iter()
                    .map(|s| s * rng.random_range(0.85..1.15))
                    .collect(),
            );
            raw_weights.push(rng.random_range(0.5..1.5f64));
        }
        let total: f64 = raw_weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = raw_weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        SpeakerMixture {
            means,
            stddevs,
            cumulative,
        }
    }

    /// Sample frames from the weighted mixture.
    fn sample(&self, rng: &mut ChaCha8Rng, frames: usize, kind: FeatureKind) -> FeatureMatrix {
        let dims = self.means[0].len();
        let mut out = FeatureMatrix::new(kind, dims);
        let mut row = vec![0.0; dims];
        for _ in 0..frames {
            let pick: f64 = rng.random_range(0.0..1.0);
            let c = self
                .cumulative
                .iter()
                .position(|&edge| pick < edge)
                .unwrap_or(self.means.len() - 1);
            for d in 0..dims {
                let z: f64 = StandardNormal.sample(rng);
                row[d] = self.means[c][d] + self.stddevs[c][d] * z;
            }
            out.push_row(&row);
        }
        out
    }
}

/// Generate the corpus under `dir` and return the manifest path.
///
/// Archives use the default front-end dimensionalities, so a run over
/// the corpus must keep the default cepstral orders. The manifest leaves
/// every utterance unassigned; callers split it before running.
pub fn synth_corpus(dir: &Path, spec: &SynthSpec) -> Result<PathBuf> {
    assert!(
        spec.speakers > 0
            && spec.utterances_per_speaker > 0
            && spec.frames_per_utterance > 0
            && spec.components > 0,
        "degenerate corpus shape"
    );
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let frontend = FrontendConfig::default();
    let streams = [FeatureKind::Mfcc, FeatureKind::RastaPlp];

    let mut anchors = Vec::new();
    for kind in streams {
        let mut anchor_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            spec.seed,
            &format!("synth:anchors:{}", kind.tag()),
        ));
        anchors.push(StreamAnchors::draw(
            &mut anchor_rng,
            spec.components,
            kind.dims(&frontend),
        ));
    }

    let mut entries = Vec::with_capacity(spec.speakers * spec.utterances_per_speaker);
    for s in 1..=spec.speakers {
        let speaker_id = format!("s{s:02}");
        for (kind, anchor) in streams.iter().copied().zip(&anchors) {
            let mut model_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                spec.seed,
                &format!("synth:speaker:{speaker_id}:{}", kind.tag()),
            ));
            let mixture = SpeakerMixture::draw(&mut model_rng, anchor);
            for u in 1..=spec.utterances_per_speaker {
                let utterance_id = format!("{speaker_id}_u{u:02}");
                let mut frame_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    spec.seed,
                    &format!("synth:frames:{utterance_id}:{}", kind.tag()),
                ));
                let frames = mixture.sample(&mut frame_rng, spec.frames_per_utterance, kind);
                let archive = Archive::from_features(
                    &frames,
                    [0u8; 32],
                    ArchiveMeta {
                        speaker: Some(speaker_id.clone()),
                        utterance: Some(utterance_id.clone()),
                        layout: None,
                    },
                );
                write_archive(
                    &dir.join(format!("{utterance_id}.{}.fea", kind.tag())),
                    &archive,
                )?;
            }
        }
        for u in 1..=spec.utterances_per_speaker {
            let utterance_id = format!("{speaker_id}_u{u:02}");
            entries.push(ManifestEntry {
                speaker_id: speaker_id.clone(),
                utterance_id: utterance_id.clone(),
                path: dir.join(&utterance_id),
                split: None,
                shared_text: false,
            });
        }
    }

    let manifest = ExperimentManifest {
        meta: CorpusMeta {
            corpus: "synth".into(),
            sample_rate: 16_000,
            frames: true,
        },
        entries,
    };
    let path = dir.join("manifest.jsonl");
    manifest.write(&path)?;
    Ok(path)
}
