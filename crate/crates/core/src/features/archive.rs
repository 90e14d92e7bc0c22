//! On-disk container for feature streams and supervectors.
//!
//! Layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SPKF"
//! 4       1     format version (1)
//! 5       1     kind code
//! 6       4     dims (u32)
//! 10      4     rows (u32)
//! 14      32    config hash (SHA-256 of the toolkit config JSON)
//! 46      4     meta length in bytes (u32)
//! 50      m     meta (JSON, UTF-8)
//! 50+m    …     rows·dims f32 values, row-major
//! ```
//!
//! The config hash guards against mixing artifacts produced under
//! different settings. The meta block carries per-utterance labels and,
//! for concatenated supervectors, the segment layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};

const MAGIC: &[u8; 4] = b"SPKF";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 50;

/// What an archive's rows are.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchiveKind {
    /// Frame-level feature vectors of the tagged kind.
    Feature(FeatureKind),
    /// One supervector per row, pooled from models over the tagged kind.
    Supervector(FeatureKind),
    /// Concatenated supervectors; segment layout in the meta block.
    FusedSupervector,
}

impl ArchiveKind {
    fn code(self) -> u8 {
        let feature_code = |k: FeatureKind| match k {
            FeatureKind::Mfcc => 1,
            FeatureKind::RastaPlp => 2,
            FeatureKind::MfccDeltas => 3,
            FeatureKind::RastaPlpDeltas => 4,
        };
        match self {
            ArchiveKind::Feature(k) => feature_code(k),
            ArchiveKind::Supervector(k) => 10 + feature_code(k),
            ArchiveKind::FusedSupervector => 20,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        let feature_kind = |c: u8| match c {
            1 => Ok(FeatureKind::Mfcc),
            2 => Ok(FeatureKind::RastaPlp),
            3 => Ok(FeatureKind::MfccDeltas),
            4 => Ok(FeatureKind::RastaPlpDeltas),
            other => Err(Error::ArchiveFormat(format!("unknown kind code {other}"))),
        };
        match code {
            1..=4 => Ok(ArchiveKind::Feature(feature_kind(code)?)),
            11..=14 => Ok(ArchiveKind::Supervector(feature_kind(code - 10)?)),
            20 => Ok(ArchiveKind::FusedSupervector),
            other => Err(Error::ArchiveFormat(format!("unknown kind code {other}"))),
        }
    }
}

/// One source segment of a concatenated supervector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLayout {
    /// Start position within the fused vector.
    pub offset: usize,
    /// Segment length (components × dims).
    pub len: usize,
    /// Feature kind the segment's models were trained on.
    pub kind: FeatureKind,
    /// Mixture components of the source model.
    pub components: usize,
    /// Frame-level dimensionality of the source model.
    pub dims: usize,
}

/// Optional labels riding along with the payload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<SegmentLayout>>,
}

/// In-memory form of one archive file.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub kind: ArchiveKind,
    pub dims: usize,
    /// Row-major values, rows() × dims.
    pub data: Vec<f64>,
    pub config_hash: [u8; 32],
    pub meta: ArchiveMeta,
}

impl Archive {
    pub fn rows(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn from_features(m: &FeatureMatrix, config_hash: [u8; 32], meta: ArchiveMeta) -> Archive {
        Archive {
            kind: ArchiveKind::Feature(m.kind()),
            dims: m.dims(),
            data: m.as_flat().to_vec(),
            config_hash,
            meta,
        }
    }

    /// Reinterpret a feature archive as a matrix.
    pub fn into_features(self) -> Result<FeatureMatrix> {
        match self.kind {
            ArchiveKind::Feature(kind) => {
                let m = FeatureMatrix::from_flat(kind, self.dims, self.data);
                super::check_finite(&m)?;
                Ok(m)
            }
            _ => Err(Error::ArchiveFormat(
                "archive holds supervectors, not feature frames".into(),
            )),
        }
    }
}

fn encode(archive: &Archive) -> Result<Vec<u8>> {
    assert!(archive.dims > 0 && archive.data.len().is_multiple_of(archive.dims));
    let rows = archive.rows();
    let meta = serde_json::to_vec(&archive.meta)?;
    let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + archive.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(archive.kind.code());
    out.extend_from_slice(&(archive.dims as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&archive.config_hash);
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for &v in &archive.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

fn decode(bytes: &[u8], origin: &Path) -> Result<Archive> {
    let fail = |msg: String| Error::ArchiveFormat(format!("{}: {msg}", origin.display()));
    if bytes.len() < HEADER_LEN {
        return Err(fail("file shorter than header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(fail(format!("unsupported version {}", bytes[4])));
    }
    let kind = ArchiveKind::from_code(bytes[5])?;
    let dims = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if dims == 0 {
        return Err(fail("zero dims".into()));
    }
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(&bytes[14..46]);
    let meta_len = u32::from_le_bytes(bytes[46..50].try_into().unwrap()) as usize;

    let data_start = HEADER_LEN
        .checked_add(meta_len)
        .ok_or_else(|| fail("meta length overflow".into()))?;
    let expected = rows
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(data_start))
        .ok_or_else(|| fail("payload size overflow".into()))?;
    if bytes.len() != expected {
        return Err(fail(format!(
            "expected {expected} bytes for {rows}x{dims}, found {}",
            bytes.len()
        )));
    }

    let meta: ArchiveMeta = serde_json::from_slice(&bytes[HEADER_LEN..data_start])
        .map_err(|e| fail(format!("bad meta block: {e}")))?;

    let mut data = Vec::with_capacity(rows * dims);
    for chunk in bytes[data_start..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(fail("non-finite value in payload".into()));
        }
        data.push(v);
    }
    Ok(Archive {
        kind,
        dims,
        data,
        config_hash,
        meta,
    })
}

/// Write an archive atomically (temp file + rename in the target
/// directory), so concurrent readers never observe a torn file.
pub fn write_archive(path: &Path, archive: &Archive) -> Result<()> {
    let bytes = encode(archive)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    std::io::Write::write_all(&mut tmp, &bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<Archive> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    decode(&bytes, path)
}

/// Read and insist the archive was produced under the expected config.
pub fn read_archive_checked(path: &Path, expected_hash: &[u8; 32]) -> Result<Archive> {
    let archive = read_archive(path)?;
    if &archive.config_hash != expected_hash {
        return Err(Error::ConfigHashMismatch(format!(
            "{} was produced under a different configuration",
            path.display()
        )));
    }
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_archive() -> Archive {
        // f32-exact values so the round trip is bit-faithful.
        let m = FeatureMatrix::from_rows(
            FeatureKind::RastaPlp,
            3,
            vec![vec![1.5, -2.25, 0.0], vec![4.0, 0.5, -8.0]],
        );
        Archive::from_features(
            &m,
            [7u8; 32],
            ArchiveMeta {
                speaker: Some("spk01".into()),
                utterance: Some("utt_003".into()),
                layout: None,
            },
        )
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("utt.fea");
        let archive = sample_archive();
        write_archive(&path, &archive).unwrap();
        let back = read_archive(&path).unwrap();
        assert_eq!(back, archive);
        let m = back.into_features().unwrap();
        assert_eq!(m.kind(), FeatureKind::RastaPlp);
        assert_eq!(m.num_frames(), 2);
        assert_eq!(m.row(1), &[4.0, 0.5, -8.0]);
    }

    #[test]
    fn kind_codes_round_trip() {
        let kinds = [
            ArchiveKind::Feature(FeatureKind::Mfcc),
            ArchiveKind::Feature(FeatureKind::RastaPlpDeltas),
            ArchiveKind::Supervector(FeatureKind::Mfcc),
            ArchiveKind::Supervector(FeatureKind::RastaPlp),
            ArchiveKind::FusedSupervector,
        ];
        for kind in kinds {
            assert_eq!(ArchiveKind::from_code(kind.code()).unwrap(), kind);
        }
        assert!(ArchiveKind::from_code(0).is_err());
        assert!(ArchiveKind::from_code(99).is_err());
    }

    #[test]
    fn layout_meta_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fused.fea");
        let layout = vec![
            SegmentLayout {
                offset: 0,
                len: 4,
                kind: FeatureKind::Mfcc,
                components: 2,
                dims: 2,
            },
            SegmentLayout {
                offset: 4,
                len: 6,
                kind: FeatureKind::RastaPlp,
                components: 2,
                dims: 3,
            },
        ];
        let archive = Archive {
            kind: ArchiveKind::FusedSupervector,
            dims: 10,
            data: (0..10).map(|i| i as f64).collect(),
            config_hash: [0u8; 32],
            meta: ArchiveMeta {
                speaker: None,
                utterance: Some("u1".into()),
                layout: Some(layout.clone()),
            },
        };
        write_archive(&path, &archive).unwrap();
        let back = read_archive(&path).unwrap();
        assert_eq!(back.meta.layout.as_deref(), Some(layout.as_slice()));
        assert!(back.into_features().is_err(), "supervectors are not frames");
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("utt.fea");
        write_archive(&path, &sample_archive()).unwrap();
        let good = std::fs::read(&path).unwrap();

        let cases: Vec<(&str, Vec<u8>)> = vec![
            ("bad magic", {
                let mut b = good.clone();
                b[0] = b'X';
                b
            }),
            ("bad version", {
                let mut b = good.clone();
                b[4] = 9;
                b
            }),
            ("bad kind", {
                let mut b = good.clone();
                b[5] = 77;
                b
            }),
            ("truncated", good[..good.len() - 3].to_vec()),
            ("trailing garbage", {
                let mut b = good.clone();
                b.extend_from_slice(&[1, 2, 3, 4]);
                b
            }),
        ];
        for (label, bytes) in cases {
            std::fs::write(&path, &bytes).unwrap();
            assert!(
                matches!(read_archive(&path), Err(Error::ArchiveFormat(_))),
                "{label} accepted"
            );
        }
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("utt.fea");
        write_archive(&path, &sample_archive()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_archive(&path), Err(Error::ArchiveFormat(_))));
    }

    #[test]
    fn hash_check_gates_mixed_configs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("utt.fea");
        write_archive(&path, &sample_archive()).unwrap();
        assert!(read_archive_checked(&path, &[7u8; 32]).is_ok());
        let err = read_archive_checked(&path, &[8u8; 32]).unwrap_err();
        assert!(matches!(err, Error::ConfigHashMismatch(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_archive_is_not_found() {
        let err = read_archive(Path::new("/nonexistent/x.fea")).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }
}
