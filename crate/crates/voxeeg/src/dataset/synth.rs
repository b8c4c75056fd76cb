//! Synthetic multimodal corpus generator.
//!
//! Each subject gets a latent identity: a voice (base pitch plus a
//! formant-like spectral envelope) and an EEG signature (one gain per
//! frequency band, shared by all channels through fixed channel-group
//! scales). Per utterance:
//!
//! * audio = harmonic source shaped by the voice envelope, with
//!   per-utterance pitch/formant jitter, vibrato and slow amplitude
//!   modulation, plus white noise at the configured SNR;
//! * EEG = per channel, a gain-weighted sum of band-limited noise in
//!   1-4, 4-8, 8-16 and 16-32 Hz, plus a little sensor noise.
//!
//! Durations are uniform in [2 s, 4 s] with whole-millisecond values so
//! the audio and EEG lengths agree exactly. Every random draw comes
//! from a dedicated ChaCha stream keyed by (purpose, subject,
//! utterance), which makes generation deterministic per seed and makes
//! the EEG bytes independent of the acoustic noise level.

use super::{
    write_eeg, write_wav_mono16, DatasetError, DatasetManifest, ManifestEntry, Recording,
    AUDIO_RATE, EEG_RATE,
};
use crate::dsp::BiquadCascade;
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::path::Path;

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub num_subjects: usize,
    pub utterances_per_subject: usize,
    pub channel_count: usize,
    /// Acoustic signal-to-noise ratio in dB.
    pub noise_db: f64,
    pub seed: u64,
}

/// EEG bands whose per-subject gains carry identity, in Hz.
const BANDS: [(f64, f64); 4] = [(1.0, 4.0), (4.0, 8.0), (8.0, 16.0), (16.0, 32.0)];
/// Channels are split into this many contiguous gain groups.
const NUM_GROUPS: usize = 4;
/// Relative scale of each channel group, applied on top of the band gains.
const GROUP_SCALE: [f64; NUM_GROUPS] = [1.0, 0.85, 0.7, 0.55];
/// RMS of the clean harmonic source before noise is added.
const SOURCE_RMS: f64 = 0.12;
/// Overall EEG amplitude scale (arbitrary units).
const EEG_SCALE: f64 = 5.0;

/// Stream purposes for the per-draw ChaCha streams.
const STREAM_LATENT: u64 = 1;
const STREAM_DURATION: u64 = 2;
const STREAM_VOICE: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_EEG: u64 = 5;

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.num_subjects < 2 {
            return Err(DatasetError::InvalidSpec(format!(
                "need at least 2 subjects, got {}",
                self.num_subjects
            )));
        }
        if self.utterances_per_subject < 1 {
            return Err(DatasetError::InvalidSpec(
                "need at least 1 utterance per subject".into(),
            ));
        }
        if self.channel_count < 1 {
            return Err(DatasetError::InvalidSpec("need at least 1 EEG channel".into()));
        }
        Ok(())
    }
}

/// A subject's latent identity.
struct Latent {
    f0_base: f64,
    /// (center Hz, gain) of three formant-like envelope peaks.
    formants: [(f64, f64); 3],
    /// One gain per band; channel groups apply fixed relative scales.
    eeg_gains: [f64; BANDS.len()],
}

fn stream_rng(seed: u64, purpose: u64, subject: usize, utterance: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) | ((subject as u64) << 24) | utterance as u64);
    rng
}

fn draw_latent(seed: u64, subject: usize) -> Latent {
    let mut rng = stream_rng(seed, STREAM_LATENT, subject, 0);
    let f0_base = rng.random_range(112.0..162.0);
    let centers = [
        rng.random_range(430.0..740.0),
        rng.random_range(1300.0..2050.0),
        rng.random_range(2650.0..3250.0),
    ];
    let mut formants = [(0.0, 0.0); 3];
    for (slot, &c) in formants.iter_mut().zip(&centers) {
        *slot = (c, rng.random_range(0.6..1.0));
    }
    let mut eeg_gains = [0.0; BANDS.len()];
    for gain in eeg_gains.iter_mut() {
        *gain = rng.random_range(0.15..1.0);
    }
    Latent {
        f0_base,
        formants,
        eeg_gains,
    }
}

/// Utterance duration in whole milliseconds, uniform over [2000, 4000].
fn draw_duration_ms(seed: u64, subject: usize, utterance: usize) -> usize {
    let mut rng = stream_rng(seed, STREAM_DURATION, subject, utterance);
    rng.random_range(2000..=4000)
}

/// Clean harmonic source at the subject's voice, unit-free, RMS-normalized.
fn synth_voice(latent: &Latent, samples: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = AUDIO_RATE as f64;
    let f0 = latent.f0_base * rng.random_range(0.85..1.15);
    let mut peaks = latent.formants;
    for p in peaks.iter_mut() {
        p.0 *= rng.random_range(0.90..1.10);
    }
    let phase0: f64 = rng.random_range(0.0..2.0 * PI);
    let vib_rate = rng.random_range(4.0..7.0);
    let vib_phase: f64 = rng.random_range(0.0..2.0 * PI);
    let am_rate = rng.random_range(1.5..3.5);
    let am_phase: f64 = rng.random_range(0.0..2.0 * PI);

    let count = ((7600.0 / f0) as usize).min(45).max(1);
    let amps: Vec<f64> = (1..=count)
        .map(|h| {
            let freq = h as f64 * f0;
            let mut a = 0.03 / h as f64;
            for &(center, gain) in &peaks {
                let bw = 120.0 + 0.06 * center;
                a += gain * (-((freq - center) * (freq - center)) / (2.0 * bw * bw)).exp();
            }
            a
        })
        .collect();

    let mut out = vec![0.0f64; samples];
    let mut phase = phase0;
    for (i, sample) in out.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let inst = f0 * (1.0 + 0.02 * (2.0 * PI * vib_rate * t + vib_phase).sin());
        phase += 2.0 * PI * inst / fs;
        if phase > 2.0 * PI {
            phase -= 2.0 * PI;
        }
        // Evaluate all harmonics of the carrier by complex rotation.
        let (s1, c1) = phase.sin_cos();
        let (mut sh, mut ch) = (s1, c1);
        let mut acc = 0.0;
        for &a in &amps {
            acc += a * sh;
            let ns = sh * c1 + ch * s1;
            let nc = ch * c1 - sh * s1;
            sh = ns;
            ch = nc;
        }
        let am = 1.0 + 0.25 * (2.0 * PI * am_rate * t + am_phase).sin();
        *sample = acc * am;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / samples as f64).sqrt();
    if rms > 0.0 {
        let k = SOURCE_RMS / rms;
        for v in out.iter_mut() {
            *v *= k;
        }
    }
    out
}

fn synth_eeg(
    latent: &Latent,
    channels: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
    band_filters: &[BiquadCascade],
) -> Array2<f32> {
    let mut eeg = Array2::<f32>::zeros((channels, samples));
    let mut scratch = vec![0.0f64; samples];
    for c in 0..channels {
        let group = c * NUM_GROUPS / channels.max(1);
        let mut channel = vec![0.0f64; samples];
        for (band, filter) in band_filters.iter().enumerate() {
            for v in scratch.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let filtered = filter
                .apply(&scratch)
                .expect("band noise is finite by construction");
            let gain = latent.eeg_gains[band] * GROUP_SCALE[group.min(NUM_GROUPS - 1)];
            for (acc, v) in channel.iter_mut().zip(&filtered) {
                *acc += gain * v;
            }
        }
        for acc in channel.iter_mut() {
            *acc += 0.02 * rng.sample::<f64, _>(StandardNormal);
        }
        for (slot, v) in eeg.row_mut(c).iter_mut().zip(&channel) {
            *slot = (EEG_SCALE * v) as f32;
        }
    }
    eeg
}

fn band_filters() -> Vec<BiquadCascade> {
    BANDS
        .iter()
        .map(|&(lo, hi)| {
            BiquadCascade::bandpass(lo, hi, EEG_RATE as f64, 4)
                .expect("band edges are valid by construction")
        })
        .collect()
}

/// Generate one recording in memory (0-based subject and utterance).
pub fn generate_recording(
    spec: &SynthSpec,
    subject: usize,
    utterance: usize,
) -> Result<Recording, DatasetError> {
    spec.validate()?;
    if subject >= spec.num_subjects || utterance >= spec.utterances_per_subject {
        return Err(DatasetError::InvalidSpec(format!(
            "subject {subject} utterance {utterance} outside the spec"
        )));
    }
    let filters = band_filters();
    Ok(generate_with_filters(spec, subject, utterance, &filters))
}

fn generate_with_filters(
    spec: &SynthSpec,
    subject: usize,
    utterance: usize,
    filters: &[BiquadCascade],
) -> Recording {
    let latent = draw_latent(spec.seed, subject);
    let ms = draw_duration_ms(spec.seed, subject, utterance);
    let audio_len = ms * AUDIO_RATE as usize / 1000;
    let eeg_len = ms * EEG_RATE as usize / 1000;

    let mut voice_rng = stream_rng(spec.seed, STREAM_VOICE, subject, utterance);
    let mut audio = synth_voice(&latent, audio_len, &mut voice_rng);
    let mut noise_rng = stream_rng(spec.seed, STREAM_NOISE, subject, utterance);
    let noise_rms = SOURCE_RMS * 10f64.powf(-spec.noise_db / 20.0);
    for v in audio.iter_mut() {
        *v += noise_rms * noise_rng.sample::<f64, _>(StandardNormal);
        *v = v.clamp(-0.999, 0.999);
    }

    let mut eeg_rng = stream_rng(spec.seed, STREAM_EEG, subject, utterance);
    let eeg = synth_eeg(&latent, spec.channel_count, eeg_len, &mut eeg_rng, filters);

    Recording {
        subject_id: subject_name(subject),
        sentence_index: utterance as u32,
        audio: audio.iter().map(|&v| v as f32).collect(),
        eeg,
        noise_level_db: Some(spec.noise_db),
    }
}

fn subject_name(subject: usize) -> String {
    format!("s{:02}", subject + 1)
}

/// Generate the corpus on disk and write its manifest.
///
/// The last two subjects become the test split (one for a 3-subject
/// corpus, none below that), mirroring a "first K subjects train" data
/// layout. Generation is bit-reproducible per seed.
pub fn synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest, DatasetError> {
    spec.validate()?;
    let audio_dir = out_dir.join("audio");
    let eeg_dir = out_dir.join("eeg");
    std::fs::create_dir_all(&audio_dir)?;
    std::fs::create_dir_all(&eeg_dir)?;

    let filters = band_filters();
    let mut entries = Vec::with_capacity(spec.num_subjects * spec.utterances_per_subject);
    for subject in 0..spec.num_subjects {
        for utterance in 0..spec.utterances_per_subject {
            let rec = generate_with_filters(spec, subject, utterance, &filters);
            let audio_rel = format!("audio/{}_{:03}.wav", rec.subject_id, utterance);
            let eeg_rel = format!("eeg/{}_{:03}.eegf", rec.subject_id, utterance);
            write_wav_mono16(&out_dir.join(&audio_rel), AUDIO_RATE, &rec.audio)?;
            write_eeg(&out_dir.join(&eeg_rel), &rec.eeg)?;
            entries.push(ManifestEntry {
                subject: rec.subject_id,
                sentence: utterance as u32,
                audio: audio_rel,
                eeg: eeg_rel,
            });
        }
    }

    let test_count = spec.num_subjects.saturating_sub(2).min(2);
    let names: Vec<String> = (0..spec.num_subjects).map(subject_name).collect();
    let split = spec.num_subjects - test_count;
    let mut manifest = DatasetManifest {
        channel_count: spec.channel_count,
        utterances_per_subject: spec.utterances_per_subject,
        train_subjects: names[..split].to_vec(),
        test_subjects: names[split..].to_vec(),
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    manifest.base_dir = out_dir.to_path_buf();
    Ok(manifest)
}
