//! Recordings, dataset manifests, and on-disk formats.
//!
//! A recording couples one utterance of 16 kHz mono audio with the
//! simultaneously captured multichannel EEG at 1000 Hz. Audio lives on
//! disk as 16-bit PCM WAV, EEG as a small float32 binary (see
//! [`eegbin`]). A dataset is described by a single JSON manifest listing
//! the train/test subject split and one audio/EEG file pair per
//! (subject, sentence).
//!
//! [`synth`] generates a complete synthetic corpus in which both
//! modalities carry speaker identity; its acoustic noise level is
//! configurable while the EEG is generated independently of it.

mod eegbin;
mod synth;

pub use eegbin::{read_eeg, write_eeg};
pub use synth::{generate_recording, synth_dataset, SynthSpec};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Required audio sample rate in Hz.
pub const AUDIO_RATE: u32 = 16_000;
/// Required EEG sample rate in Hz.
pub const EEG_RATE: u32 = 1_000;
/// Maximum allowed audio/EEG duration disagreement in seconds.
pub const MAX_DURATION_SKEW_S: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("subject {0} appears in both train and test splits")]
    SplitOverlap(String),
    #[error("no entry for subject {0} sentence {1}")]
    NotFound(String, u32),
    #[error("sample-rate mismatch: {0}")]
    RateMismatch(String),
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One subject's utterance: audio plus synchronized EEG.
#[derive(Debug, Clone)]
pub struct Recording {
    pub subject_id: String,
    /// 0-based sentence number within the subject's session.
    pub sentence_index: u32,
    /// Mono samples at [`AUDIO_RATE`], scaled to [-1, 1).
    pub audio: Vec<f32>,
    /// Channel-major samples (C x S) at [`EEG_RATE`].
    pub eeg: Array2<f32>,
    /// Acoustic noise level metadata (SNR in dB), when known.
    pub noise_level_db: Option<f64>,
}

impl Recording {
    /// Audio duration in seconds.
    pub fn audio_seconds(&self) -> f64 {
        self.audio.len() as f64 / AUDIO_RATE as f64
    }

    /// EEG duration in seconds.
    pub fn eeg_seconds(&self) -> f64 {
        self.eeg.ncols() as f64 / EEG_RATE as f64
    }
}

/// One manifest line: where a (subject, sentence) pair's files live.
/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject: String,
    pub sentence: u32,
    pub audio: String,
    pub eeg: String,
}

/// Dataset description: subject split plus the file table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub channel_count: usize,
    pub utterances_per_subject: usize,
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    /// All subjects, train split first, in manifest order.
    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.train_subjects
            .iter()
            .chain(self.test_subjects.iter())
            .map(String::as_str)
    }

    /// Directory that entry paths are resolved against.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Resolve an entry path against the manifest directory.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// Look up the file-table entry for one (subject, sentence) pair.
    pub fn entry(&self, subject: &str, sentence: u32) -> Option<&ManifestEntry> {
        self.entries
            .iter()
            .find(|e| e.subject == subject && e.sentence == sentence)
    }

    /// Structural validation: split disjointness and a complete,
    /// duplicate-free file table.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let train: HashSet<&str> = self.train_subjects.iter().map(String::as_str).collect();
        for s in &self.test_subjects {
            if train.contains(s.as_str()) {
                return Err(DatasetError::SplitOverlap(s.clone()));
            }
        }
        let subjects: Vec<&str> = self.subjects().collect();
        let known: HashSet<&str> = subjects.iter().copied().collect();
        let mut seen: HashSet<(&str, u32)> = HashSet::new();
        for e in &self.entries {
            if !known.contains(e.subject.as_str()) {
                return Err(DatasetError::Parse(format!(
                    "entry references unknown subject {}",
                    e.subject
                )));
            }
            if e.sentence as usize >= self.utterances_per_subject {
                return Err(DatasetError::Parse(format!(
                    "entry sentence {} out of range for subject {}",
                    e.sentence, e.subject
                )));
            }
            if !seen.insert((e.subject.as_str(), e.sentence)) {
                return Err(DatasetError::Parse(format!(
                    "duplicate entry for subject {} sentence {}",
                    e.subject, e.sentence
                )));
            }
        }
        let expected = subjects.len() * self.utterances_per_subject;
        if self.entries.len() != expected {
            return Err(DatasetError::Parse(format!(
                "expected {} entries ({} subjects x {} utterances), found {}",
                expected,
                subjects.len(),
                self.utterances_per_subject,
                self.entries.len()
            )));
        }
        Ok(())
    }

    /// Write the manifest as pretty JSON.
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| DatasetError::Parse(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

/// Load and validate a manifest; every referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| DatasetError::MissingFile(path.to_path_buf()))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::Parse(e.to_string()))?;
    manifest.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    manifest.validate()?;
    for e in &manifest.entries {
        for rel in [&e.audio, &e.eeg] {
            let p = manifest.resolve(rel);
            if !p.is_file() {
                return Err(DatasetError::MissingFile(p));
            }
        }
    }
    Ok(manifest)
}

/// Load one recording and check it against the recording invariants.
pub fn load_recording(
    manifest: &DatasetManifest,
    subject: &str,
    sentence: u32,
) -> Result<Recording, DatasetError> {
    let entry = manifest
        .entry(subject, sentence)
        .ok_or_else(|| DatasetError::NotFound(subject.to_string(), sentence))?;
    let (rate, audio) = read_wav_mono16(&manifest.resolve(&entry.audio))?;
    if rate != AUDIO_RATE {
        return Err(DatasetError::RateMismatch(format!(
            "{}: audio rate {} Hz, need {} Hz",
            entry.audio, rate, AUDIO_RATE
        )));
    }
    let eeg = read_eeg(&manifest.resolve(&entry.eeg))?;
    if eeg.nrows() != manifest.channel_count {
        return Err(DatasetError::InvalidRecording(format!(
            "{}: {} EEG channels, manifest says {}",
            entry.eeg,
            eeg.nrows(),
            manifest.channel_count
        )));
    }
    let rec = Recording {
        subject_id: subject.to_string(),
        sentence_index: sentence,
        audio,
        eeg,
        noise_level_db: None,
    };
    let skew = (rec.audio_seconds() - rec.eeg_seconds()).abs();
    if skew > MAX_DURATION_SKEW_S {
        return Err(DatasetError::InvalidRecording(format!(
            "audio/EEG duration skew {skew:.3} s exceeds {MAX_DURATION_SKEW_S} s"
        )));
    }
    Ok(rec)
}

/// Write mono 16-bit PCM WAV. Samples are clamped to [-1, 1) and
/// quantized as `round(x * 32768)`.
pub fn write_wav_mono16(path: &Path, rate: u32, samples: &[f32]) -> Result<(), DatasetError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| DatasetError::InvalidRecording(e.to_string()))?;
    for &s in samples {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer
            .write_sample(q)
            .map_err(|e| DatasetError::InvalidRecording(e.to_string()))?;
    }
    writer
        .finalize()
        .map_err(|e| DatasetError::InvalidRecording(e.to_string()))?;
    Ok(())
}

/// Read mono 16-bit PCM WAV; returns (sample rate, samples / 32768).
pub fn read_wav_mono16(path: &Path) -> Result<(u32, Vec<f32>), DatasetError> {
    let mut reader = match hound::WavReader::open(path) {
        Ok(r) => r,
        Err(hound::Error::IoError(e)) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DatasetError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(DatasetError::InvalidRecording(format!("{path:?}: {e}"))),
    };
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(DatasetError::InvalidRecording(format!(
            "{path:?}: need mono 16-bit PCM, got {} ch {} bit",
            spec.channels, spec.bits_per_sample
        )));
    }
    let samples: Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|e| DatasetError::InvalidRecording(format!("{path:?}: {e}")))?;
    Ok((
        spec.sample_rate,
        samples.iter().map(|&s| s as f32 / 32768.0).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("voxeeg_wav_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.wav");
        let samples: Vec<f32> = (-5i32..=5)
            .map(|q| (q * 1000) as f32 / 32768.0)
            .collect();
        write_wav_mono16(&path, AUDIO_RATE, &samples).unwrap();
        let (rate, back) = read_wav_mono16(&path).unwrap();
        assert_eq!(rate, AUDIO_RATE);
        assert_eq!(back, samples);
    }

    #[test]
    fn manifest_rejects_split_overlap() {
        let m = DatasetManifest {
            channel_count: 2,
            utterances_per_subject: 1,
            train_subjects: vec!["s01".into(), "s02".into()],
            test_subjects: vec!["s02".into()],
            entries: vec![],
            base_dir: PathBuf::new(),
        };
        assert!(matches!(m.validate(), Err(DatasetError::SplitOverlap(s)) if s == "s02"));
    }

    #[test]
    fn manifest_requires_complete_file_table() {
        let entry = |s: &str, i: u32| ManifestEntry {
            subject: s.into(),
            sentence: i,
            audio: format!("{s}_{i}.wav"),
            eeg: format!("{s}_{i}.eegf"),
        };
        let mut m = DatasetManifest {
            channel_count: 2,
            utterances_per_subject: 2,
            train_subjects: vec!["s01".into()],
            test_subjects: vec!["s02".into()],
            entries: vec![entry("s01", 0), entry("s01", 1), entry("s02", 0)],
            base_dir: PathBuf::new(),
        };
        assert!(matches!(m.validate(), Err(DatasetError::Parse(_))));
        m.entries.push(entry("s02", 1));
        m.validate().unwrap();
        m.entries[3] = entry("s02", 0);
        assert!(matches!(m.validate(), Err(DatasetError::Parse(_))));
    }
}
