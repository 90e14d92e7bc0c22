//! Mel-frequency cepstra from windowed frames.
//!
//! Per frame: magnitude spectrum via zero-padded FFT → triangular mel
//! filterbank → log energies (floored) → DCT-II → coefficients c1..c_n
//! (c0 dropped, so the stream is invariant to frame gain).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::FrameMatrix;
use crate::config::FrontendConfig;
use crate::error::Result;
use crate::features::{FeatureKind, FeatureMatrix};

/// Energies below this are clamped before the log.
pub(crate) const LOG_FLOOR: f64 = 1e-10;

/// Mel scale: m = 2595·log10(1 + f/700).
pub(crate) fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// Inverse mel scale.
pub(crate) fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank over the one-sided spectrum.
///
/// Filter centers are mel-uniform between the band edges; each filter's
/// weight at bin frequency f rises from the previous center and falls to
/// the next, evaluated in continuous frequency (not snapped to bins).
pub(crate) fn mel_filterbank(cfg: &FrontendConfig, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = cfg.fft_size / 2 + 1;
    let mel_lo = hz_to_mel(cfg.mel_low_hz);
    let mel_hi = hz_to_mel(cfg.mel_high_hz);
    let n = cfg.mel_filters;
    let edges: Vec<f64> = (0..n + 2)
        .map(|k| mel_to_hz(mel_lo + (mel_hi - mel_lo) * k as f64 / (n + 1) as f64))
        .collect();

    let bin_hz = sample_rate as f64 / cfg.fft_size as f64;
    (0..n)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|bin| {
                    let f = bin as f64 * bin_hz;
                    let rise = (f - lo) / (center - lo);
                    let fall = (hi - f) / (hi - center);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Unnormalized DCT-II: X[k] = Σ_n x[n]·cos(π·k·(n + 1/2)/N).
pub(crate) fn dct_ii(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(i, &v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum()
        })
        .collect()
}

/// One-sided magnitude spectra of every frame, zero-padded to fft_size.
pub(crate) fn magnitude_spectra(frames: &FrameMatrix, fft_size: usize) -> Vec<Vec<f64>> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_size);
    let n_bins = fft_size / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];

    frames
        .frames
        .iter()
        .map(|frame| {
            for (slot, &s) in buf
                .iter_mut()
                .zip(frame.iter().chain(std::iter::repeat(&0.0)))
            {
                *slot = Complex::new(s, 0.0);
            }
            fft.process(&mut buf);
            buf[..n_bins].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

/// Mel cepstra (c1..c_n) for every frame.
pub fn mfcc(frames: &FrameMatrix, cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    cfg.validate_for_rate(frames.sample_rate)?;
    debug_assert!(frames.window_len <= cfg.fft_size);

    let filterbank = mel_filterbank(cfg, frames.sample_rate);
    let spectra = magnitude_spectra(frames, cfg.fft_size);

    let mut out = FeatureMatrix::new(FeatureKind::Mfcc, cfg.mfcc_coeffs);
    let mut log_energies = vec![0.0; cfg.mel_filters];
    for spectrum in &spectra {
        for (e, filter) in log_energies.iter_mut().zip(&filterbank) {
            let energy: f64 = filter.iter().zip(spectrum).map(|(w, s)| w * s).sum();
            *e = energy.max(LOG_FLOOR).ln();
        }
        let cepstra = dct_ii(&log_energies, cfg.mfcc_coeffs + 1);
        out.push_row(&cepstra[1..]);
    }
    Ok(out)
}
