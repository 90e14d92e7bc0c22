//! Perceptual prediction cepstra with band-pass-filtered log band
//! trajectories.
//!
//! Per frame: power spectrum → critical-band (Bark) integration → log →
//! per-band IIR band-pass filter (numerator [0.2, 0.1, 0, −0.1, −0.2],
//! configurable pole) → exp → equal-loudness weighting → cube-root
//! compression → edge-band duplication → autocorrelation via inverse
//! cosine transform → Levinson-Durbin → cepstra c0..c_order.
//!
//! The band filter carries per-utterance state only: its first four
//! outputs are zeroed while the numerator state warms up, which makes the
//! response to a constant trajectory exactly zero from the fifth frame on.

use crate::audio::FrameMatrix;
use crate::config::FrontendConfig;
use crate::error::{Error, Result};
use crate::features::mfcc::{magnitude_spectra, LOG_FLOOR};
use crate::features::{FeatureKind, FeatureMatrix};

/// Bark scale: z = 6·asinh(f/600).
pub(crate) fn hz_to_bark(hz: f64) -> f64 {
    6.0 * (hz / 600.0).asinh()
}

/// Inverse Bark scale.
pub(crate) fn bark_to_hz(bark: f64) -> f64 {
    600.0 * (bark / 6.0).sinh()
}

/// Number of critical bands covering 0..Nyquist (21 at 16 kHz).
pub(crate) fn bark_band_count(sample_rate: u32) -> usize {
    hz_to_bark(sample_rate as f64 / 2.0).ceil() as usize + 1
}

/// Center frequencies of the critical bands, uniform on the Bark axis
/// from 0 to Nyquist.
pub(crate) fn bark_band_centers_hz(sample_rate: u32) -> Vec<f64> {
    let nfilts = bark_band_count(sample_rate);
    let nyqbark = hz_to_bark(sample_rate as f64 / 2.0);
    (0..nfilts)
        .map(|m| bark_to_hz(nyqbark * m as f64 / (nfilts - 1) as f64))
        .collect()
}

/// Critical-band weights over the one-sided spectrum. Each band has unit
/// response within ±0.5 Bark of its center, a 10 dB/Bark lower skirt and
/// a 25 dB/Bark upper skirt: w = 10^min(0, hif, −2.5·lof).
pub(crate) fn bark_filterbank(fft_size: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = fft_size / 2 + 1;
    let nfilts = bark_band_count(sample_rate);
    let nyqbark = hz_to_bark(sample_rate as f64 / 2.0);
    let bin_barks: Vec<f64> = (0..n_bins)
        .map(|i| hz_to_bark(i as f64 * sample_rate as f64 / fft_size as f64))
        .collect();

    (0..nfilts)
        .map(|m| {
            let center = nyqbark * m as f64 / (nfilts - 1) as f64;
            bin_barks
                .iter()
                .map(|&b| {
                    let lof = b - center - 0.5;
                    let hif = b - center + 0.5;
                    10f64.powf(hif.min(-2.5 * lof).min(0.0))
                })
                .collect()
        })
        .collect()
}

/// Band-pass filter along one band's log-energy trajectory.
///
/// Numerator [0.2, 0.1, 0, −0.1, −0.2] over denominator [1, −pole]. The
/// numerator sums to zero, so DC is rejected exactly. The first four
/// outputs are zeroed while the numerator delay line fills (the recursion
/// starts from that warmed-up state), avoiding the long start-up
/// transient a cold IIR would carry.
pub(crate) fn rasta_filter(x: &[f64], pole: f64) -> Vec<f64> {
    const B: [f64; 5] = [0.2, 0.1, 0.0, -0.1, -0.2];
    let mut z = [0.0f64; 4];
    let mut out = Vec::with_capacity(x.len());
    for (t, &xt) in x.iter().enumerate() {
        let y = B[0] * xt + z[0];
        let feedback = if t < 4 { 0.0 } else { pole * y };
        z[0] = B[1] * xt + z[1] + feedback;
        z[1] = B[2] * xt + z[2];
        z[2] = B[3] * xt + z[3];
        z[3] = B[4] * xt;
        out.push(if t < 4 { 0.0 } else { y });
    }
    out
}

/// Equal-loudness weight at a band center frequency.
pub(crate) fn equal_loudness(f_hz: f64) -> f64 {
    let fsq = f_hz * f_hz;
    (fsq / (fsq + 1.6e5)).powi(2) * ((fsq + 1.44e6) / (fsq + 9.61e6))
}

/// Autocorrelation lags of the symmetric band spectrum: the inverse
/// transform of the even extension [a_0..a_{B-1}, a_{B-2}..a_1],
/// evaluated directly as a cosine sum.
pub(crate) fn band_autocorrelation(bands: &[f64], n_lags: usize) -> Vec<f64> {
    let nb = bands.len();
    let period = (nb - 1) as f64;
    let n = 2.0 * period;
    (0..n_lags)
        .map(|k| {
            let mut acc = bands[0];
            for (m, &a) in bands.iter().enumerate().take(nb - 1).skip(1) {
                acc += 2.0 * a * (std::f64::consts::PI * k as f64 * m as f64 / period).cos();
            }
            acc += bands[nb - 1] * (std::f64::consts::PI * k as f64).cos();
            acc / n
        })
        .collect()
}

/// Levinson-Durbin recursion: all-pole coefficients [1, a_1..a_order] and
/// the final prediction error for the given autocorrelation lags.
pub(crate) fn levinson(r: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    assert!(r.len() > order, "need order + 1 autocorrelation lags");
    let mut err = r[0];
    if err <= 0.0 {
        return Err(Error::NumericalFailure(
            "non-positive zero-lag autocorrelation (degenerate band energies)".into(),
        ));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    for i in 1..=order {
        let mut acc = r[i];
        for j in 1..i {
            acc += a[j] * r[i - j];
        }
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 {
            return Err(Error::NumericalFailure(format!(
                "prediction error vanished at recursion order {i}"
            )));
        }
    }
    Ok((a, err))
}

/// All-pole model to cepstra: c_0 = ln(err),
/// c_n = −a_n − (1/n)·Σ_{m=1}^{n−1} (n−m)·a_m·c_{n−m}.
pub(crate) fn lpc_to_cepstra(a: &[f64], err: f64, n_cep: usize) -> Vec<f64> {
    let mut c = vec![0.0; n_cep];
    c[0] = err.ln();
    for n in 1..n_cep {
        let mut acc = 0.0;
        for m in 1..n.min(a.len()) {
            acc += (n - m) as f64 * a[m] * c[n - m];
        }
        let a_n = if n < a.len() { a[n] } else { 0.0 };
        c[n] = -a_n - acc / n as f64;
    }
    c
}

/// Perceptual prediction cepstra (c0..c_order) for every frame.
pub fn rasta_plp(frames: &FrameMatrix, cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    cfg.validate_for_rate(frames.sample_rate)?;
    let order = cfg.plp_order;
    let mut out = FeatureMatrix::new(FeatureKind::RastaPlp, order + 1);
    let n_frames = frames.frames.len();
    if n_frames == 0 {
        return Ok(out);
    }

    let wts = bark_filterbank(cfg.fft_size, frames.sample_rate);
    let nbands = wts.len();
    if nbands < 3 {
        return Err(Error::ConfigInvalid(format!(
            "only {nbands} critical bands at {} Hz; need at least 3",
            frames.sample_rate
        )));
    }

    let spectra = magnitude_spectra(frames, cfg.fft_size);

    // Log band energies as [band][frame] trajectories.
    let mut traj = vec![vec![0.0f64; n_frames]; nbands];
    for (t, spectrum) in spectra.iter().enumerate() {
        for (m, w) in wts.iter().enumerate() {
            let energy: f64 = w.iter().zip(spectrum).map(|(w, s)| w * s * s).sum();
            traj[m][t] = energy.max(LOG_FLOOR).ln();
        }
    }

    // Band-pass filtering in the log domain, back to the power domain.
    for band in traj.iter_mut() {
        let filtered = rasta_filter(band, cfg.rasta_pole);
        for (slot, y) in band.iter_mut().zip(filtered) {
            *slot = y.exp();
        }
    }

    let eql: Vec<f64> = bark_band_centers_hz(frames.sample_rate)
        .iter()
        .map(|&f| equal_loudness(f))
        .collect();

    let mut bands = vec![0.0f64; nbands];
    for t in 0..n_frames {
        for m in 0..nbands {
            bands[m] = (eql[m] * traj[m][t]).powf(0.33);
        }
        // The outermost bands are unreliable; copy their neighbors.
        bands[0] = bands[1];
        bands[nbands - 1] = bands[nbands - 2];

        let r = band_autocorrelation(&bands, order + 1);
        let (a, err) = levinson(&r, order)?;
        out.push_row(&lpc_to_cepstra(&a, err, order + 1));
    }
    Ok(out)
}
