//! IIR filters for EEG preprocessing.
//!
//! Two designs are provided, both returned as cascades of second-order
//! sections (biquads):
//!
//! * [`BiquadCascade::bandpass`]: Butterworth bandpass, built from the
//!   analog lowpass prototype through the lowpass-to-bandpass transform
//!   and the bilinear transform with frequency prewarping. An order-4
//!   filter yields exactly two sections.
//! * [`BiquadCascade::notch`]: single-section narrow band-stop with an
//!   exact null at the center frequency (default Q = 30).
//!
//! Filtering is causal direct-form-II-transposed with zero initial
//! state, applied per channel.

use rustfft::num_complex::Complex64;
use thiserror::Error;

/// Default notch quality factor (center frequency / rejection bandwidth).
pub const DEFAULT_NOTCH_Q: f64 = 30.0;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("input contains a non-finite sample")]
    NonFiniteInput,
}

/// One second-order section with `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadSection {
    /// Pole radii of this section (moduli of the roots of
    /// `z^2 + a1 z + a2`).
    fn pole_radii(&self) -> [f64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let p1 = (Complex64::new(-self.a1, 0.0) + disc) / 2.0;
        let p2 = (Complex64::new(-self.a1, 0.0) - disc) / 2.0;
        [p1.norm(), p2.norm()]
    }

    /// Complex response at normalized angular frequency `w` (rad/sample).
    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::new(0.0, -w).exp();
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }
}

/// What a cascade was designed as, kept for provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    Bandpass { f_low: f64, f_high: f64 },
    Notch { f_center: f64, quality: f64 },
}

/// A cascade of biquad sections plus its design metadata.
#[derive(Debug, Clone)]
pub struct BiquadCascade {
    pub sections: Vec<BiquadSection>,
    pub kind: FilterKind,
    pub sample_rate: f64,
}

impl BiquadCascade {
    /// Butterworth bandpass of the given (even) order.
    ///
    /// The passband edges sit at -3 dB. Requires
    /// `0 < f_low < f_high < fs/2` and `order` in {2, 4, 6, 8}.
    pub fn bandpass(f_low: f64, f_high: f64, fs: f64, order: usize) -> Result<Self, DspError> {
        if !(f_low > 0.0 && f_low < f_high && f_high < fs / 2.0) {
            return Err(DspError::InvalidBand(format!(
                "need 0 < f_low < f_high < fs/2, got f_low={f_low}, f_high={f_high}, fs={fs}"
            )));
        }
        if !matches!(order, 2 | 4 | 6 | 8) {
            return Err(DspError::InvalidBand(format!(
                "order must be one of 2, 4, 6, 8, got {order}"
            )));
        }
        // Analog Butterworth lowpass prototype of half the requested
        // order: poles on the unit circle in the left half plane, no
        // zeros, unit gain.
        let n = order / 2;
        let proto_poles: Vec<Complex64> = (0..n)
            .map(|k| {
                let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();

        // Prewarp the band edges so the bilinear transform lands them
        // exactly on the requested digital frequencies.
        let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
        let wl = warp(f_low);
        let wh = warp(f_high);
        let w0 = (wl * wh).sqrt();
        let bw = wh - wl;

        // Lowpass-to-bandpass: each prototype pole p maps to the pair
        // p*bw/2 +- sqrt((p*bw/2)^2 - w0^2); n zeros appear at s = 0 and
        // the gain picks up bw^n.
        let mut poles = Vec::with_capacity(2 * n);
        for &p in &proto_poles {
            let s = p * (bw / 2.0);
            let d = (s * s - Complex64::new(w0 * w0, 0.0)).sqrt();
            poles.push(s + d);
            poles.push(s - d);
        }
        let gain_s = bw.powi(n as i32);

        // Bilinear transform. Zeros: the n zeros at s=0 land on z=1 and
        // n more arrive at z=-1 from infinity, so every section gets the
        // numerator (z-1)(z+1) = z^2 - 1. Gain correction uses
        // prod(2fs - s_zero) / prod(2fs - s_pole) with the s-plane zeros
        // all at the origin.
        let fs2 = 2.0 * fs;
        let z_poles: Vec<Complex64> = poles
            .iter()
            .map(|&s| (Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s))
            .collect();
        let mut denom = Complex64::new(1.0, 0.0);
        for &s in &poles {
            denom *= Complex64::new(fs2, 0.0) - s;
        }
        let gain_z = (gain_s * fs2.powi(n as i32) / denom).re;

        let pairs = pair_conjugates(&z_poles)?;
        let section_gain = gain_z.abs().powf(1.0 / pairs.len() as f64) * gain_z.signum();
        let sections = pairs
            .into_iter()
            .map(|(a1, a2)| BiquadSection {
                b0: section_gain,
                b1: 0.0,
                b2: -section_gain,
                a1,
                a2,
            })
            .collect();

        let cascade = BiquadCascade {
            sections,
            kind: FilterKind::Bandpass { f_low, f_high },
            sample_rate: fs,
        };
        cascade.check_stable()?;
        Ok(cascade)
    }

    /// Narrow band-stop biquad with an exact null at `f_center`.
    pub fn notch(f_center: f64, fs: f64, quality: f64) -> Result<Self, DspError> {
        if !(f_center > 0.0 && f_center < fs / 2.0) {
            return Err(DspError::InvalidBand(format!(
                "notch center must lie in (0, fs/2), got {f_center} at fs={fs}"
            )));
        }
        if !(quality > 0.0) {
            return Err(DspError::InvalidBand(format!(
                "notch quality must be positive, got {quality}"
            )));
        }
        let w0 = 2.0 * std::f64::consts::PI * f_center / fs;
        let alpha = w0.sin() / (2.0 * quality);
        let cosw = w0.cos();
        let a0 = 1.0 + alpha;
        let cascade = BiquadCascade {
            sections: vec![BiquadSection {
                b0: 1.0 / a0,
                b1: -2.0 * cosw / a0,
                b2: 1.0 / a0,
                a1: -2.0 * cosw / a0,
                a2: (1.0 - alpha) / a0,
            }],
            kind: FilterKind::Notch {
                f_center,
                quality,
            },
            sample_rate: fs,
        };
        cascade.check_stable()?;
        Ok(cascade)
    }

    fn check_stable(&self) -> Result<(), DspError> {
        for s in &self.sections {
            for r in s.pole_radii() {
                if !(r < 1.0 - 1e-9) {
                    return Err(DspError::InvalidBand(format!(
                        "designed section is unstable (pole radius {r})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Causal filtering, direct form II transposed, zero initial state.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, DspError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DspError::NonFiniteInput);
        }
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut w1, mut w2) = (0.0f64, 0.0f64);
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b0 * xin + w1;
                w1 = s.b1 * xin - s.a1 * out + w2;
                w2 = s.b2 * xin - s.a2 * out;
                *v = out;
            }
        }
        Ok(y)
    }

    /// Complex frequency response at `f` Hz.
    pub fn response(&self, f: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f / self.sample_rate;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    /// Magnitude response at `f` Hz in dB.
    pub fn response_db(&self, f: f64) -> f64 {
        20.0 * self.response(f).norm().log10()
    }
}

/// Group a conjugate-closed pole set into denominators `[1, a1, a2]`.
///
/// Complex poles pair with their conjugates; real poles (which appear
/// for wide bands) are paired off in sorted order.
fn pair_conjugates(poles: &[Complex64]) -> Result<Vec<(f64, f64)>, DspError> {
    const IM_TOL: f64 = 1e-10;
    let mut upper: Vec<Complex64> = Vec::new();
    let mut real: Vec<f64> = Vec::new();
    for &p in poles {
        if p.im > IM_TOL {
            upper.push(p);
        } else if p.im >= -IM_TOL {
            real.push(p.re);
        }
    }
    if real.len() % 2 != 0 {
        return Err(DspError::InvalidBand(
            "internal pole pairing failure".into(),
        ));
    }
    real.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::new();
    for p in upper {
        out.push((-2.0 * p.re, p.norm_sqr()));
    }
    for pair in real.chunks(2) {
        out.push((-(pair[0] + pair[1]), pair[0] * pair[1]));
    }
    Ok(out)
}
