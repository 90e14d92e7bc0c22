//! `spkid`: command-line driver for the speaker-identification toolkit.
//!
//! Stage commands (`extract`, `train-ubm`, `adapt`, `train`) write their
//! artifacts to disk for inspection and reuse; `evaluate` and `run-grid`
//! drive the whole pipeline. Exit codes: 0 success, 2 configuration or
//! manifest problems, 3 training / numeric / leakage failures, 4 I/O
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spkid_core::classifiers::{nb_train, save_classifier, svm_train, TrainedClassifier};
use spkid_core::config::derive_seed;
use spkid_core::error::{Error, Result};
use spkid_core::experiment::{
    emit_tables, kind_stage, load_manifest, run_grid, synth_corpus, utterance_features,
    CellOutcome, FeatureSet, GridRequest, KindStage, OutputFormat, Split, SynthSpec, SystemKind,
};
use spkid_core::features::archive::{write_archive, Archive, ArchiveKind, ArchiveMeta};
use spkid_core::features::FeatureKind;
use spkid_core::fusion::concat_supervectors;
use spkid_core::gmm::{em_fit, load_model, map_adapt_means, save_model};
use spkid_core::{FeatureMatrix, ToolkitConfig};

#[derive(Parser)]
#[command(
    name = "spkid",
    version,
    about = "Text-independent speaker identification: cepstral features, \
             adapted mixture supervectors, SVM/NB back-ends, and fusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Frame-level feature kind on the command line.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Mfcc,
    Rastaplp,
    MfccDd,
    RastaplpDd,
}

impl From<KindArg> for FeatureKind {
    fn from(value: KindArg) -> FeatureKind {
        match value {
            KindArg::Mfcc => FeatureKind::Mfcc,
            KindArg::Rastaplp => FeatureKind::RastaPlp,
            KindArg::MfccDd => FeatureKind::MfccDeltas,
            KindArg::RastaplpDd => FeatureKind::RastaPlpDeltas,
        }
    }
}

/// Back-end selector for `train`.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Svm,
    Nb,
}

/// Results table format.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(value: FormatArg) -> OutputFormat {
        match value {
            FormatArg::Text => OutputFormat::Text,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

/// Manifest side selector for `adapt`.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Write frame-level feature archives for every manifest utterance.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Toolkit configuration (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature kind to extract; repeatable. Defaults to both base
        /// streams.
        #[arg(long = "kind", value_enum)]
        kinds: Vec<KindArg>,
        /// Directory the archives are written into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the background model for one feature kind on the train
    /// split.
    TrainUbm {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt per-utterance models to a background model and write their
    /// supervectors.
    Adapt {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Background model produced by `train-ubm`.
        #[arg(long)]
        ubm: PathBuf,
        /// Which manifest side to adapt.
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
        /// Directory the supervector archives are written into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one back-end classifier on the train split's supervectors.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature set (F1..F5).
        #[arg(long)]
        feature: String,
        #[arg(long, value_enum)]
        system: BackendArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Classifier file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one feature-set x system cell on the test split.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature set (F1..F5).
        #[arg(long)]
        feature: String,
        /// System: 1/svm, 2/nb, 3/fused.
        #[arg(long)]
        system: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Split unassigned utterances with the configured per-speaker
        /// counts before running.
        #[arg(long)]
        auto_split: bool,
        /// Optional directory for models and decision logs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full feature-set x system grid and print the rate table.
    RunGrid {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature sets to run, comma separated (default: all five).
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        /// Systems to run, comma separated (default: all three).
        #[arg(long, value_delimiter = ',')]
        systems: Vec<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Split unassigned utterances with the configured per-speaker
        /// counts before running.
        #[arg(long)]
        auto_split: bool,
        /// Optional directory for models, decision logs, and the
        /// results table.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
    /// Generate the synthetic sanity-check corpus.
    SynthCorpus {
        /// Directory the corpus is written into.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        speakers: usize,
        #[arg(long, default_value_t = 10)]
        utterances: usize,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        components: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ToolkitConfig> {
    match path {
        Some(p) => ToolkitConfig::load(p),
        None => Ok(ToolkitConfig::default()),
    }
}

fn parse_features(items: &[String]) -> Result<Vec<FeatureSet>> {
    if items.is_empty() {
        Ok(FeatureSet::ALL.to_vec())
    } else {
        items.iter().map(|s| s.parse()).collect()
    }
}

fn parse_systems(items: &[String]) -> Result<Vec<SystemKind>> {
    if items.is_empty() {
        Ok(SystemKind::ALL.to_vec())
    } else {
        items.iter().map(|s| s.parse()).collect()
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Per-index train vectors for a feature set, concatenating when the
/// set spans both streams.
fn stage_vectors(stages: &[KindStage], n: usize) -> Result<Vec<Vec<f64>>> {
    (0..n)
        .map(|i| match stages {
            [one] => Ok(one.train[i].values.clone()),
            [a, b] => Ok(concat_supervectors(&a.train[i], &b.train[i])?.values),
            _ => unreachable!("feature sets combine at most two streams"),
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract {
            manifest,
            config,
            kinds,
            out,
        } => {
            let cfg = load_config(&config)?;
            cfg.validate()?;
            let manifest = load_manifest(&manifest)?;
            let kinds: Vec<FeatureKind> = if kinds.is_empty() {
                vec![FeatureKind::Mfcc, FeatureKind::RastaPlp]
            } else {
                kinds.into_iter().map(FeatureKind::from).collect()
            };
            create_dir(&out)?;
            let hash = cfg.content_hash();
            for entry in &manifest.entries {
                for &kind in &kinds {
                    let feat = utterance_features(&manifest, &cfg, entry, kind)?;
                    let archive = Archive::from_features(
                        &feat,
                        hash,
                        ArchiveMeta {
                            speaker: Some(entry.speaker_id.clone()),
                            utterance: Some(entry.utterance_id.clone()),
                            layout: None,
                        },
                    );
                    write_archive(
                        &out.join(format!("{}.{}.fea", entry.utterance_id, kind.tag())),
                        &archive,
                    )?;
                }
            }
            println!(
                "wrote {} archives to {}",
                manifest.entries.len() * kinds.len(),
                out.display()
            );
            Ok(())
        }
        Command::TrainUbm {
            manifest,
            config,
            kind,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            cfg.validate()?;
            let manifest = load_manifest(&manifest)?;
            let kind = FeatureKind::from(kind);
            let train = manifest.train_entries();
            if train.is_empty() {
                return Err(Error::InsufficientData(
                    "no utterances are assigned to the train split".into(),
                ));
            }
            let mut pool = FeatureMatrix::new(kind, kind.dims(&cfg.frontend));
            for entry in train {
                let feat = utterance_features(&manifest, &cfg, entry, kind)?;
                for row in feat.rows() {
                    pool.push_row(row);
                }
            }
            let (ubm, report) = em_fit(
                &pool,
                &cfg.em,
                derive_seed(seed, &format!("ubm:{}", kind.tag())),
            )?;
            save_model(&out, &ubm, &cfg.content_hash())?;
            println!(
                "trained {} components on {} frames in {} iterations; wrote {}",
                ubm.num_components(),
                pool.num_frames(),
                report.iterations,
                out.display()
            );
            Ok(())
        }
        Command::Adapt {
            manifest,
            config,
            ubm,
            split,
            out,
        } => {
            let cfg = load_config(&config)?;
            cfg.validate()?;
            let manifest = load_manifest(&manifest)?;
            let hash = cfg.content_hash();
            let ubm = load_model(&ubm, Some(&hash))?;
            create_dir(&out)?;
            let selected: Vec<_> = manifest
                .entries
                .iter()
                .filter(|e| match split {
                    SplitArg::Train => e.split == Some(Split::Train),
                    SplitArg::Test => e.split == Some(Split::Test),
                    SplitArg::All => true,
                })
                .collect();
            for entry in &selected {
                let feat = utterance_features(&manifest, &cfg, entry, ubm.kind())?;
                let model = map_adapt_means(&ubm, &feat, &cfg.map)?;
                let sv = model
                    .supervector(cfg.supervector.kl_scaling)
                    .tagged(&entry.utterance_id);
                let archive = Archive {
                    kind: ArchiveKind::Supervector(sv.kind),
                    dims: sv.values.len(),
                    data: sv.values,
                    config_hash: hash,
                    meta: ArchiveMeta {
                        speaker: Some(entry.speaker_id.clone()),
                        utterance: Some(entry.utterance_id.clone()),
                        layout: None,
                    },
                };
                write_archive(
                    &out.join(format!(
                        "{}.{}.sv.fea",
                        entry.utterance_id,
                        ubm.kind().tag()
                    )),
                    &archive,
                )?;
            }
            println!(
                "adapted {} utterances; archives in {}",
                selected.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            manifest,
            config,
            feature,
            system,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            cfg.validate()?;
            let manifest = load_manifest(&manifest)?;
            let fset: FeatureSet = feature.parse()?;
            let stages: Vec<KindStage> = fset
                .kinds()
                .iter()
                .map(|&k| kind_stage(&manifest, &cfg, seed, k))
                .collect::<Result<_>>()?;
            let labels: Vec<String> = manifest
                .train_entries()
                .iter()
                .map(|e| e.speaker_id.clone())
                .collect();
            let vectors = stage_vectors(&stages, labels.len())?;
            let hash = cfg.content_hash();
            let model = match system {
                BackendArg::Svm => TrainedClassifier::Svm(svm_train(
                    &vectors,
                    &labels,
                    &cfg.svm,
                    derive_seed(seed, &format!("svm:{}", fset.tag())),
                    hash,
                )?),
                BackendArg::Nb => {
                    TrainedClassifier::Nb(nb_train(&vectors, &labels, &cfg.nb, hash)?)
                }
            };
            save_classifier(&out, &model)?;
            println!(
                "trained on {} utterances from {} speakers; wrote {}",
                labels.len(),
                model.classes().len(),
                out.display()
            );
            Ok(())
        }
        Command::Evaluate {
            manifest,
            config,
            feature,
            system,
            seed,
            auto_split,
            out,
        } => {
            let cfg = load_config(&config)?;
            let mut manifest = load_manifest(&manifest)?;
            let fset: FeatureSet = feature.parse()?;
            let system: SystemKind = system.parse()?;
            if auto_split {
                manifest.auto_split(&cfg.split, seed)?;
            }
            let grid = run_grid(
                &manifest,
                &cfg,
                &GridRequest {
                    features: vec![fset],
                    systems: vec![system],
                    seed,
                },
                out.as_deref(),
            )?;
            let cell = grid
                .cell(fset, system)
                .expect("requested cell is always produced");
            match &cell.outcome {
                CellOutcome::Rate(r) => {
                    println!(
                        "{fset} / {system}: {:.2}% ({}/{})",
                        r.display_rate(),
                        r.correct,
                        r.total
                    );
                    Ok(())
                }
                CellOutcome::Failed(message) => Err(Error::NumericalFailure(format!(
                    "{fset} / {system} failed: {message}"
                ))),
            }
        }
        Command::RunGrid {
            manifest,
            config,
            features,
            systems,
            seed,
            auto_split,
            out,
            format,
        } => {
            let cfg = load_config(&config)?;
            let mut manifest = load_manifest(&manifest)?;
            let features = parse_features(&features)?;
            let systems = parse_systems(&systems)?;
            if auto_split {
                manifest.auto_split(&cfg.split, seed)?;
            }
            if let Some(dir) = &out {
                create_dir(dir)?;
                if auto_split {
                    // Persist the materialized split for reproducibility.
                    manifest.write(&dir.join("manifest.split.jsonl"))?;
                }
            }
            let grid = run_grid(
                &manifest,
                &cfg,
                &GridRequest {
                    features,
                    systems,
                    seed,
                },
                out.as_deref(),
            )?;
            let format = OutputFormat::from(format);
            let table = emit_tables(&grid, format);
            print!("{table}");
            if let Some(dir) = &out {
                let path = dir.join(format!("results.{}", format.extension()));
                std::fs::write(&path, &table).map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        }
        Command::SynthCorpus {
            out,
            speakers,
            utterances,
            frames,
            components,
            seed,
        } => {
            let spec = SynthSpec {
                speakers,
                utterances_per_speaker: utterances,
                frames_per_utterance: frames,
                components,
                seed,
            };
            let path = synth_corpus(&out, &spec)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}
