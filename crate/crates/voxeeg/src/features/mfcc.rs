//! Mel-frequency cepstral coefficients.
//!
//! Fixed pipeline for 16 kHz mono audio: pre-emphasis 0.97; 400-sample
//! (25 ms) Hamming windows with 160-sample (10 ms) hop; 512-point
//! magnitude FFT; 40 triangular mel filters spanning 0-8000 Hz with
//! continuous (un-rounded) bin edges; natural log with floor 1e-10;
//! orthonormal DCT-II; coefficients 0..12 kept.

use super::FeatureError;
use ndarray::Array2;
use rustfft::{num_complex::Complex64, FftPlanner};

/// Analysis window length in samples (25 ms at 16 kHz).
pub const MFCC_FRAME_LEN: usize = 400;
/// Hop in samples (10 ms at 16 kHz, giving the 100 Hz frame rate).
pub const MFCC_FRAME_HOP: usize = 160;

const FFT_LEN: usize = 512;
const NUM_FILTERS: usize = 40;
const NUM_COEFFS: usize = 13;
const PRE_EMPHASIS: f64 = 0.97;
const LOG_FLOOR: f64 = 1e-10;
const BAND_LOW_HZ: f64 = 0.0;
const BAND_HIGH_HZ: f64 = 8000.0;
const SAMPLE_RATE: f64 = 16000.0;

/// Number of frames produced for a given sample count, when at least
/// one full window fits.
pub fn mfcc_frame_count(samples: usize) -> Option<usize> {
    if samples < MFCC_FRAME_LEN {
        None
    } else {
        Some(1 + (samples - MFCC_FRAME_LEN) / MFCC_FRAME_HOP)
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters as (bin index, weight) lists over the 257
/// magnitude bins. Peak positions stay fractional.
fn mel_filterbank() -> Vec<Vec<(usize, f64)>> {
    let mel_lo = hz_to_mel(BAND_LOW_HZ);
    let mel_hi = hz_to_mel(BAND_HIGH_HZ);
    let points: Vec<f64> = (0..NUM_FILTERS + 2)
        .map(|i| {
            let mel = mel_lo + (mel_hi - mel_lo) * i as f64 / (NUM_FILTERS + 1) as f64;
            mel_to_hz(mel) * FFT_LEN as f64 / SAMPLE_RATE
        })
        .collect();
    (0..NUM_FILTERS)
        .map(|j| {
            let (left, center, right) = (points[j], points[j + 1], points[j + 2]);
            let mut taps = Vec::new();
            let lo = left.ceil() as usize;
            let hi = (right.floor() as usize).min(FFT_LEN / 2);
            for k in lo..=hi {
                let kf = k as f64;
                let w = if kf <= center {
                    (kf - left) / (center - left)
                } else {
                    (right - kf) / (right - center)
                };
                if w > 0.0 {
                    taps.push((k, w));
                }
            }
            taps
        })
        .collect()
}

/// Orthonormal DCT-II rows for the kept coefficients.
fn dct_rows() -> [[f64; NUM_FILTERS]; NUM_COEFFS] {
    let mut rows = [[0.0; NUM_FILTERS]; NUM_COEFFS];
    let n = NUM_FILTERS as f64;
    for (k, row) in rows.iter_mut().enumerate() {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for (m, slot) in row.iter_mut().enumerate() {
            *slot = scale * (std::f64::consts::PI * k as f64 * (m as f64 + 0.5) / n).cos();
        }
    }
    rows
}

/// Compute the T x 13 MFCC matrix for 16 kHz audio.
pub fn mfcc13(audio: &[f64]) -> Result<Array2<f64>, FeatureError> {
    let frames = mfcc_frame_count(audio.len()).ok_or_else(|| {
        FeatureError::TooShort(format!(
            "{} samples, need at least {MFCC_FRAME_LEN}",
            audio.len()
        ))
    })?;

    let mut emphasized = Vec::with_capacity(audio.len());
    emphasized.push(audio[0]);
    for i in 1..audio.len() {
        emphasized.push(audio[i] - PRE_EMPHASIS * audio[i - 1]);
    }

    let window: Vec<f64> = (0..MFCC_FRAME_LEN)
        .map(|n| {
            0.54 - 0.46
                * (2.0 * std::f64::consts::PI * n as f64 / (MFCC_FRAME_LEN - 1) as f64).cos()
        })
        .collect();
    let filterbank = mel_filterbank();
    let dct = dct_rows();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_LEN);

    let mut out = Array2::<f64>::zeros((frames, NUM_COEFFS));
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_LEN];
    for t in 0..frames {
        let start = t * MFCC_FRAME_HOP;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < MFCC_FRAME_LEN {
                emphasized[start + i] * window[i]
            } else {
                0.0
            };
            *slot = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        let magnitude: Vec<f64> = buf[..=FFT_LEN / 2].iter().map(|c| c.norm()).collect();

        let mut log_energies = [0.0; NUM_FILTERS];
        for (j, taps) in filterbank.iter().enumerate() {
            let e: f64 = taps.iter().map(|&(k, w)| w * magnitude[k]).sum();
            log_energies[j] = e.max(LOG_FLOOR).ln();
        }
        for (k, row) in dct.iter().enumerate() {
            out[(t, k)] = row
                .iter()
                .zip(&log_energies)
                .map(|(c, e)| c * e)
                .sum::<f64>();
        }
    }
    Ok(out)
}
