//! Statistical EEG features.
//!
//! Five scalars per 100-sample (100 ms) single-channel window:
//!
//! * `rms`: root mean square.
//! * `zcr`: sign changes between consecutive samples divided by 99;
//!   zero samples carry the previous sign.
//! * `mwa`: moving-window average, the mean of the frame.
//! * `kurtosis`: Pearson m4/m2^2 about the frame mean, 0 when the
//!   variance falls below 1e-12.
//! * `pse`: power spectral entropy, the Shannon entropy (natural log)
//!   of the normalized one-sided periodogram (51 bins for a 100-sample
//!   frame); an all-zero spectrum gives 0.
//!
//! [`eeg155`] slides this window with a 10-sample hop over every
//! channel of a 1000 Hz recording and concatenates the per-channel
//! feature blocks in channel order.

use super::FeatureError;
use ndarray::Array2;
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use std::sync::Arc;

/// Window length in samples (100 ms at 1000 Hz).
pub const EEG_FRAME_LEN: usize = 100;
/// Hop in samples (10 ms at 1000 Hz, giving the 100 Hz frame rate).
pub const EEG_FRAME_HOP: usize = 10;

/// Features per channel per frame.
pub const FEATURES_PER_CHANNEL: usize = 5;
const VARIANCE_FLOOR: f64 = 1e-12;

/// Compute the five features of one window.
pub fn eeg_frame_features(frame: &[f64]) -> [f64; FEATURES_PER_CHANNEL] {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); frame.len()];
    frame_features_with(frame, &fft, &mut buf)
}

fn frame_features_with(
    frame: &[f64],
    fft: &Arc<dyn Fft<f64>>,
    buf: &mut [Complex64],
) -> [f64; FEATURES_PER_CHANNEL] {
    let n = frame.len();
    let nf = n as f64;

    let rms = (frame.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();

    let mut changes = 0usize;
    let mut prev_sign = 0i8;
    for &v in frame {
        let sign = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            prev_sign
        };
        if prev_sign != 0 && sign != 0 && sign != prev_sign {
            changes += 1;
        }
        prev_sign = sign;
    }
    let zcr = if n > 1 {
        changes as f64 / (n - 1) as f64
    } else {
        0.0
    };

    let mwa = frame.iter().sum::<f64>() / nf;

    let m2 = frame.iter().map(|v| (v - mwa) * (v - mwa)).sum::<f64>() / nf;
    let kurtosis = if m2 < VARIANCE_FLOOR {
        0.0
    } else {
        let m4 = frame
            .iter()
            .map(|v| {
                let d = v - mwa;
                d * d * d * d
            })
            .sum::<f64>()
            / nf;
        m4 / (m2 * m2)
    };

    for (slot, &v) in buf.iter_mut().zip(frame) {
        *slot = Complex64::new(v, 0.0);
    }
    fft.process(buf);
    let bins = n / 2 + 1;
    let total: f64 = buf[..bins].iter().map(|c| c.norm_sqr()).sum();
    let pse = if total <= 0.0 {
        0.0
    } else {
        -buf[..bins]
            .iter()
            .map(|c| {
                let p = c.norm_sqr() / total;
                if p > 0.0 {
                    p * p.ln()
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    };

    [rms, zcr, mwa, kurtosis, pse]
}

/// Number of frames for a channel of `samples` samples.
pub fn eeg_frame_count(samples: usize) -> Option<usize> {
    if samples < EEG_FRAME_LEN {
        None
    } else {
        Some(1 + (samples - EEG_FRAME_LEN) / EEG_FRAME_HOP)
    }
}

/// Compute the T x (5 * channels) feature matrix of a filtered
/// multichannel EEG recording (channel-major, 1000 Hz).
pub fn eeg155(eeg: &Array2<f64>, expected_channels: usize) -> Result<Array2<f64>, FeatureError> {
    let (channels, samples) = eeg.dim();
    if channels != expected_channels {
        return Err(FeatureError::ChannelCountMismatch {
            expected: expected_channels,
            got: channels,
        });
    }
    let frames = eeg_frame_count(samples).ok_or_else(|| {
        FeatureError::TooShort(format!(
            "{samples} samples, need at least {EEG_FRAME_LEN}"
        ))
    })?;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(EEG_FRAME_LEN);
    let mut buf = vec![Complex64::new(0.0, 0.0); EEG_FRAME_LEN];
    let mut window = [0.0f64; EEG_FRAME_LEN];
    let mut out = Array2::<f64>::zeros((frames, FEATURES_PER_CHANNEL * channels));
    for c in 0..channels {
        let row = eeg.row(c);
        let row = row.as_slice().expect("eeg rows are contiguous");
        for t in 0..frames {
            let start = t * EEG_FRAME_HOP;
            window.copy_from_slice(&row[start..start + EEG_FRAME_LEN]);
            let feats = frame_features_with(&window, &fft, &mut buf);
            for (k, &v) in feats.iter().enumerate() {
                out[(t, FEATURES_PER_CHANNEL * c + k)] = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frame_gives_all_zero_features() {
        assert_eq!(eeg_frame_features(&[0.0; 100]), [0.0; 5]);
    }

    #[test]
    fn alternating_unit_frame_hand_case() {
        let frame: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let [rms, zcr, mwa, kurtosis, pse] = eeg_frame_features(&frame);
        assert_eq!(rms, 1.0);
        assert_eq!(zcr, 1.0);
        assert_eq!(mwa, 0.0);
        assert_eq!(kurtosis, 1.0);
        // +-1 alternation is the Nyquist tone: one spectral line, zero
        // entropy.
        assert!(pse.abs() < 1e-9);
    }

    #[test]
    fn zeros_carry_the_previous_sign() {
        // +1, 0, -1 has one sign change (the zero extends the +1 run).
        let mut frame = vec![0.0; 100];
        frame[0] = 1.0;
        frame[2] = -1.0;
        let feats = eeg_frame_features(&frame);
        assert_eq!(feats[1], 1.0 / 99.0);
    }

    #[test]
    fn concentrated_spectrum_has_lower_entropy_than_noise() {
        use rand::prelude::*;
        let sine: Vec<f64> = (0..100)
            .map(|i| (2.0 * std::f64::consts::PI * 50.0 * i as f64 / 1000.0).sin())
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pse_sine = eeg_frame_features(&sine)[4];
        let pse_noise = eeg_frame_features(&noise)[4];
        assert!(pse_sine < pse_noise);
    }

    #[test]
    fn scale_laws() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let frame: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = eeg_frame_features(&frame);
        for &alpha in &[0.5, 2.0, 17.3] {
            let scaled: Vec<f64> = frame.iter().map(|v| alpha * v).collect();
            let s = eeg_frame_features(&scaled);
            assert!((s[0] - alpha.abs() * base[0]).abs() < 1e-9, "rms");
            assert!((s[1] - base[1]).abs() < 1e-12, "zcr");
            assert!((s[3] - base[3]).abs() < 1e-9, "kurtosis");
        }
        let neg: Vec<f64> = frame.iter().map(|v| -2.0 * v).collect();
        let s = eeg_frame_features(&neg);
        assert!((s[0] - 2.0 * base[0]).abs() < 1e-9);
        assert!((s[3] - base[3]).abs() < 1e-9);
    }

    #[test]
    fn frame_count_formula() {
        assert_eq!(eeg_frame_count(99), None);
        assert_eq!(eeg_frame_count(100), Some(1));
        assert_eq!(eeg_frame_count(1000), Some(91));
    }

    #[test]
    fn eeg155_shape_and_channel_blocks() {
        let eeg = Array2::from_shape_fn((31, 1000), |(c, s)| {
            ((c + 1) as f64 * 0.1) * ((s as f64) * 0.05).sin()
        });
        let f = eeg155(&eeg, 31).unwrap();
        assert_eq!(f.dim(), (91, 155));
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let eeg = Array2::zeros((30, 1000));
        assert!(matches!(
            eeg155(&eeg, 31),
            Err(FeatureError::ChannelCountMismatch {
                expected: 31,
                got: 30
            })
        ));
    }

    #[test]
    fn short_recording_is_rejected() {
        let eeg = Array2::zeros((2, 99));
        assert!(matches!(eeg155(&eeg, 2), Err(FeatureError::TooShort(_))));
    }

    #[test]
    fn permuting_channels_permutes_feature_blocks() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let eeg = Array2::from_shape_fn((4, 300), |_| rng.random_range(-1.0..1.0));
        let perm = [2usize, 0, 3, 1];
        let permuted = Array2::from_shape_fn((4, 300), |(c, s)| eeg[(perm[c], s)]);
        let a = eeg155(&eeg, 4).unwrap();
        let b = eeg155(&permuted, 4).unwrap();
        for t in 0..a.nrows() {
            for (c, &src) in perm.iter().enumerate() {
                for k in 0..5 {
                    assert_eq!(b[(t, 5 * c + k)], a[(t, 5 * src + k)]);
                }
            }
        }
    }

    #[test]
    fn channels_are_independent() {
        // An impulse confined to channel 0 leaves the other channels'
        // feature blocks identical to those of a silent recording.
        let mut eeg = Array2::<f64>::zeros((3, 200));
        eeg[(0, 50)] = 1.0;
        let with_impulse = eeg155(&eeg, 3).unwrap();
        let silent = eeg155(&Array2::zeros((3, 200)), 3).unwrap();
        for t in 0..with_impulse.nrows() {
            for k in 5..15 {
                assert_eq!(with_impulse[(t, k)], silent[(t, k)]);
            }
        }
        assert_ne!(with_impulse.row(0), silent.row(0));
    }
}
