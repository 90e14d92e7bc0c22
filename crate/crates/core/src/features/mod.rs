//! Cepstral feature streams and the four frame-level feature sets.
//!
//! Two base front-ends produce per-frame coefficient vectors: mel
//! cepstra (12 coefficients, c0 dropped) and band-pass-filtered
//! perceptual prediction cepstra (13 coefficients including c0). The
//! feature sets layer temporal derivatives on top:
//!
//!   F1 = mel cepstra (12)            F2 = perceptual cepstra (13)
//!   F3 = F1 | Δ | ΔΔ (36)            F4 = F2 | Δ | ΔΔ (39)
//!
//! The fifth set is assembled at the supervector level in `fusion` and
//! has no frame-level stream.

pub mod archive;
mod mfcc;
mod rasta;

pub use mfcc::mfcc;
pub use rasta::rasta_plp;

use serde::{Deserialize, Serialize};

use crate::audio::FrameMatrix;
use crate::config::FrontendConfig;
use crate::error::{Error, Result};

/// Identity of a frame-level feature stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// F1: mel cepstra.
    Mfcc,
    /// F2: perceptual prediction cepstra.
    RastaPlp,
    /// F3: mel cepstra with Δ and ΔΔ appended.
    MfccDeltas,
    /// F4: perceptual cepstra with Δ and ΔΔ appended.
    RastaPlpDeltas,
}

impl FeatureKind {
    /// The base stream this kind is built from.
    pub fn base(self) -> FeatureKind {
        match self {
            FeatureKind::Mfcc | FeatureKind::MfccDeltas => FeatureKind::Mfcc,
            FeatureKind::RastaPlp | FeatureKind::RastaPlpDeltas => FeatureKind::RastaPlp,
        }
    }

    /// Whether Δ/ΔΔ columns are appended.
    pub fn has_deltas(self) -> bool {
        matches!(self, FeatureKind::MfccDeltas | FeatureKind::RastaPlpDeltas)
    }

    /// Vector dimensionality under the given front-end settings.
    /// Defaults give 12 / 13 / 36 / 39.
    pub fn dims(self, cfg: &FrontendConfig) -> usize {
        let base = match self.base() {
            FeatureKind::Mfcc => cfg.mfcc_coeffs,
            _ => cfg.plp_order + 1,
        };
        if self.has_deltas() {
            3 * base
        } else {
            base
        }
    }

    /// Stable lowercase tag used in file names and serialized documents.
    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::RastaPlp => "rastaplp",
            FeatureKind::MfccDeltas => "mfcc_dd",
            FeatureKind::RastaPlpDeltas => "rastaplp_dd",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Per-utterance sequence of feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    kind: FeatureKind,
    dims: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, dims: usize) -> Self {
        assert!(dims > 0, "feature dimensionality must be positive");
        FeatureMatrix {
            kind,
            dims,
            data: Vec::new(),
        }
    }

    pub fn from_rows(kind: FeatureKind, dims: usize, rows: Vec<Vec<f64>>) -> Self {
        let mut m = FeatureMatrix::new(kind, dims);
        for row in rows {
            m.push_row(&row);
        }
        m
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dims, "row length must match dims");
        debug_assert!(
            row.iter().all(|v| v.is_finite()),
            "non-finite feature value"
        );
        self.data.extend_from_slice(row);
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dims)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn from_flat(kind: FeatureKind, dims: usize, data: Vec<f64>) -> Self {
        assert!(dims > 0 && data.len().is_multiple_of(dims));
        FeatureMatrix { kind, dims, data }
    }
}

/// Regression delta: d_t = Σ_θ θ·(c_{t+θ} − c_{t−θ}) / (2·Σ_θ θ²),
/// θ = 1..width, with edge frames replicated beyond both boundaries.
pub fn deltas(feat: &FeatureMatrix, width: usize) -> FeatureMatrix {
    assert!(width >= 1, "delta width must be at least 1");
    let n = feat.num_frames();
    let dims = feat.dims();
    let denom: f64 = 2.0 * (1..=width).map(|t| (t * t) as f64).sum::<f64>();
    let clamp = |t: isize| -> usize { t.clamp(0, n.max(1) as isize - 1) as usize };

    let mut out = FeatureMatrix::new(feat.kind(), dims);
    let mut row = vec![0.0; dims];
    for t in 0..n {
        for d in 0..dims {
            let mut acc = 0.0;
            for theta in 1..=width {
                let ahead = feat.row(clamp(t as isize + theta as isize))[d];
                let behind = feat.row(clamp(t as isize - theta as isize))[d];
                acc += theta as f64 * (ahead - behind);
            }
            row[d] = acc / denom;
        }
        out.push_row(&row);
    }
    out
}

/// Append Δ and ΔΔ columns: [x | Δx | ΔΔx], tripling the width.
fn with_deltas(base: &FeatureMatrix, target_kind: FeatureKind, width: usize) -> FeatureMatrix {
    let d1 = deltas(base, width);
    let d2 = deltas(&d1, width);
    let dims = base.dims();
    let mut out = FeatureMatrix::new(target_kind, 3 * dims);
    let mut row = vec![0.0; 3 * dims];
    for t in 0..base.num_frames() {
        row[..dims].copy_from_slice(base.row(t));
        row[dims..2 * dims].copy_from_slice(d1.row(t));
        row[2 * dims..].copy_from_slice(d2.row(t));
        out.push_row(&row);
    }
    out
}

/// Compute the base cepstral stream a feature kind is built on.
pub fn extract_base(
    base: FeatureKind,
    frames: &FrameMatrix,
    cfg: &FrontendConfig,
) -> Result<FeatureMatrix> {
    match base {
        FeatureKind::Mfcc => mfcc(frames, cfg),
        FeatureKind::RastaPlp => rasta_plp(frames, cfg),
        other => panic!("{other} is not a base stream"),
    }
}

/// Assemble one of the four frame-level feature sets from windowed
/// frames.
pub fn assemble_feature_set(
    kind: FeatureKind,
    frames: &FrameMatrix,
    cfg: &FrontendConfig,
) -> Result<FeatureMatrix> {
    let base = extract_base(kind.base(), frames, cfg)?;
    Ok(assemble_from_base(kind, &base, cfg))
}

/// Assemble a feature set from an already-computed base stream (e.g. a
/// loaded archive). Panics if the base stream has the wrong kind; callers
/// resolve kinds before loading.
pub fn assemble_from_base(
    kind: FeatureKind,
    base: &FeatureMatrix,
    cfg: &FrontendConfig,
) -> FeatureMatrix {
    assert_eq!(
        base.kind(),
        kind.base(),
        "feature set {kind} requires base stream {}",
        kind.base()
    );
    let out = if kind.has_deltas() {
        with_deltas(base, kind, cfg.delta_width)
    } else {
        base.clone()
    };
    debug_assert_eq!(out.dims(), kind.dims(cfg));
    out
}

/// Reject matrices with non-finite entries; used at trust boundaries
/// (archive loads).
pub(crate) fn check_finite(m: &FeatureMatrix) -> Result<()> {
    for (i, v) in m.as_flat().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteFeature {
                vector: i / m.dims(),
                dim: i % m.dims(),
            });
        }
    }
    Ok(())
}
