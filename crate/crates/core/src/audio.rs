//! Audio front-end: WAV ingestion, pre-emphasis, framing, windowing.
//!
//! The reader accepts RIFF/WAVE PCM with 16-bit signed little-endian
//! samples at any rate; multi-channel input is mixed down by averaging.
//! Samples are scaled by 1/32768 into [-1, 1). Downstream window and hop
//! lengths derive from the header rate, so corpora at rates other than
//! 16 kHz flow through unchanged.
//!
//! All operations here are pure; per-utterance extraction can run
//! concurrently without shared state.

use std::path::Path;

use crate::error::{Error, Result};

/// Decoded mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    /// Amplitudes in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Fixed-length analysis windows cut from one utterance.
///
/// Every frame holds exactly `window_len` samples; frames start at
/// multiples of `hop_len` and a trailing partial frame is discarded.
/// The source sample rate rides along for spectral analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub frames: Vec<Vec<f64>>,
    pub window_len: usize,
    pub hop_len: usize,
    pub sample_rate: u32,
}

const PCM_SCALE: f64 = 32768.0;

/// Read a 16-bit PCM WAV file, averaging channels to mono.
pub fn load_wav(path: &Path) -> Result<SampleBuffer> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    decode_wav(&bytes)
}

/// Decode a 16-bit PCM WAV byte stream, averaging channels to mono.
pub fn decode_wav(bytes: &[u8]) -> Result<SampleBuffer> {
    if bytes.len() < 12 {
        return Err(Error::CorruptHeader("file shorter than RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::CorruptHeader("missing RIFF/WAVE signature".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // codec, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::CorruptHeader(format!(
                    "chunk {:?} overruns file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::CorruptHeader(
                        "fmt chunk shorter than 16 bytes".into(),
                    ));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => {
                data = Some(body);
            }
            _ => {}
        }
        // Chunk bodies are word-aligned; odd sizes carry a pad byte.
        pos = body_end + (size & 1);
    }

    let (codec, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::CorruptHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::CorruptHeader("no data chunk".into()))?;

    if codec != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "codec tag {codec}, only PCM (1) is supported"
        )));
    }
    if bits != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{bits}-bit samples, only 16-bit is supported"
        )));
    }
    if channels == 0 {
        return Err(Error::CorruptHeader("fmt declares zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(Error::CorruptHeader("fmt declares zero sample rate".into()));
    }
    let block = 2 * channels as usize;
    if data.len() % block != 0 {
        return Err(Error::CorruptHeader(
            "data chunk length is not a whole number of sample blocks".into(),
        ));
    }

    let samples = data
        .chunks_exact(block)
        .map(|frame| {
            frame
                .chunks_exact(2)
                .map(|pair| i16::from_le_bytes([pair[0], pair[1]]) as f64 / PCM_SCALE)
                .sum::<f64>()
                / channels as f64
        })
        .collect();
    Ok(SampleBuffer {
        samples,
        sample_rate,
    })
}

/// Encode mono samples as a 16-bit PCM WAV byte stream.
///
/// Samples are clamped to [-1, 1] before quantization.
pub fn encode_wav(sample_rate: u32, samples: &[f64]) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * PCM_SCALE)
            .round()
            .clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Write a mono 16-bit PCM WAV file.
pub fn write_wav(path: &Path, sample_rate: u32, samples: &[f64]) -> Result<()> {
    std::fs::write(path, encode_wav(sample_rate, samples)).map_err(|e| Error::io(path, e))
}

/// First-order high-pass emphasis: y[0] = x[0], y[n] = x[n] - alpha·x[n-1].
pub fn pre_emphasize(buf: &SampleBuffer, alpha: f64) -> SampleBuffer {
    let mut samples = Vec::with_capacity(buf.samples.len());
    let mut prev = 0.0;
    for (n, &x) in buf.samples.iter().enumerate() {
        samples.push(if n == 0 { x } else { x - alpha * prev });
        prev = x;
    }
    SampleBuffer {
        samples,
        sample_rate: buf.sample_rate,
    }
}

/// Cut the signal into overlapping fixed-length frames.
///
/// window_len = round(window_ms·rate/1000), hop likewise; frames start at
/// 0, hop, 2·hop, …; the count is floor((N - window)/hop) + 1 for
/// N ≥ window, else 0.
pub fn frame_signal(buf: &SampleBuffer, window_ms: f64, hop_ms: f64) -> FrameMatrix {
    let rate = buf.sample_rate as f64;
    let window_len = (window_ms * rate / 1000.0).round() as usize;
    let hop_len = (hop_ms * rate / 1000.0).round() as usize;
    assert!(
        hop_len > 0 && window_len >= hop_len,
        "framing config unvalidated"
    );

    let n = buf.samples.len();
    let count = if n >= window_len {
        (n - window_len) / hop_len + 1
    } else {
        0
    };
    let frames = (0..count)
        .map(|f| buf.samples[f * hop_len..f * hop_len + window_len].to_vec())
        .collect();
    FrameMatrix {
        frames,
        window_len,
        hop_len,
        sample_rate: buf.sample_rate,
    }
}

/// Hamming weight w[n] = 0.54 - 0.46·cos(2πn/(L-1)).
pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Multiply each frame pointwise by the Hamming window.
pub fn apply_hamming(frames: &FrameMatrix) -> FrameMatrix {
    let window = hamming_window(frames.window_len);
    let frames_out = frames
        .frames
        .iter()
        .map(|frame| frame.iter().zip(&window).map(|(x, w)| x * w).collect())
        .collect();
    FrameMatrix {
        frames: frames_out,
        window_len: frames.window_len,
        hop_len: frames.hop_len,
        sample_rate: frames.sample_rate,
    }
}

/// Drop frames whose energy falls more than `threshold_db` below the
/// loudest frame of the utterance. Disabled by default in the config;
/// applied before windowing when enabled.
pub fn drop_low_energy_frames(frames: &FrameMatrix, threshold_db: f64) -> FrameMatrix {
    let energies: Vec<f64> = frames
        .frames
        .iter()
        .map(|f| f.iter().map(|x| x * x).sum::<f64>())
        .collect();
    let peak = energies.iter().cloned().fold(0.0_f64, f64::max);
    if peak <= 0.0 {
        return frames.clone();
    }
    let cutoff = peak * 10f64.powf(-threshold_db / 10.0);
    let kept = frames
        .frames
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| e >= cutoff)
        .map(|(f, _)| f.clone())
        .collect();
    FrameMatrix {
        frames: kept,
        window_len: frames.window_len,
        hop_len: frames.hop_len,
        sample_rate: frames.sample_rate,
    }
}
