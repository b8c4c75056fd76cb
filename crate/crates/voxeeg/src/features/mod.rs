//! Frame-level features at a common 100 Hz rate.
//!
//! * [`mfcc13`]: 13 Mel-frequency cepstral coefficients from 16 kHz
//!   audio (25 ms Hamming window, 10 ms hop).
//! * [`eeg155`]: five statistical features (RMS, zero-crossing rate,
//!   moving-window average, kurtosis, power spectral entropy) per EEG
//!   channel over 100 ms windows with 10 ms hop; 31 channels give 155
//!   dims.
//! * [`align_concat`]: truncate an MFCC stream and a KPCA-reduced EEG
//!   stream to their common length and concatenate to 43 dims.
//!
//! A [`FeatureSequence`] is a T x D matrix tagged with its kind and the
//! identity of the utterance it came from. Sequences persist in a small
//! float32 binary format (`FEAT`), one file per utterance and kind.

mod eeg;
mod mfcc;

pub use eeg::{
    eeg155, eeg_frame_count, eeg_frame_features, EEG_FRAME_HOP, EEG_FRAME_LEN,
    FEATURES_PER_CHANNEL,
};
pub use mfcc::{mfcc13, mfcc_frame_count, MFCC_FRAME_HOP, MFCC_FRAME_LEN};

use ndarray::Array2;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Frame rate shared by every feature stream, in Hz.
pub const FRAME_RATE_HZ: f64 = 100.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("input too short: {0}")]
    TooShort(String),
    #[error("expected {expected} EEG channels, got {got}")]
    ChannelCountMismatch { expected: usize, got: usize },
    #[error("cannot concatenate features of {0} with features of {1}")]
    IdentityMismatch(String, String),
    #[error("feature matrix has dimension {got}, kind {kind:?} needs {need}")]
    DimMismatch {
        kind: FeatureKind,
        need: usize,
        got: usize,
    },
    #[error("non-finite feature value at frame {0}")]
    NonFinite(usize),
    #[error("feature file {0}: {1}")]
    BadFile(PathBuf, String),
    #[error("missing features for subject {0} sentence {1}")]
    Missing(String, u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// The four feature stream kinds and their fixed widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Mfcc13,
    Eeg155,
    EegKpca30,
    Concat43,
}

impl FeatureKind {
    /// Frame width for this kind.
    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Mfcc13 => 13,
            FeatureKind::Eeg155 => 155,
            FeatureKind::EegKpca30 => 30,
            FeatureKind::Concat43 => 43,
        }
    }

    /// Stable on-disk code.
    pub fn code(self) -> u32 {
        match self {
            FeatureKind::Mfcc13 => 1,
            FeatureKind::Eeg155 => 2,
            FeatureKind::EegKpca30 => 3,
            FeatureKind::Concat43 => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(FeatureKind::Mfcc13),
            2 => Some(FeatureKind::Eeg155),
            3 => Some(FeatureKind::EegKpca30),
            4 => Some(FeatureKind::Concat43),
            _ => None,
        }
    }

    /// Short name used in file names and CLI flags.
    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Mfcc13 => "mfcc13",
            FeatureKind::Eeg155 => "eeg155",
            FeatureKind::EegKpca30 => "eegkpca30",
            FeatureKind::Concat43 => "concat43",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "mfcc13" => Some(FeatureKind::Mfcc13),
            "eeg155" => Some(FeatureKind::Eeg155),
            "eegkpca30" => Some(FeatureKind::EegKpca30),
            "concat43" => Some(FeatureKind::Concat43),
            _ => None,
        }
    }
}

/// One utterance's feature frames (T x D) at [`FRAME_RATE_HZ`].
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    pub kind: FeatureKind,
    pub frames: Array2<f64>,
    pub subject_id: String,
    pub sentence_index: u32,
}

impl FeatureSequence {
    /// Wrap a frame matrix, enforcing the kind's width and finiteness.
    pub fn new(
        kind: FeatureKind,
        frames: Array2<f64>,
        subject_id: impl Into<String>,
        sentence_index: u32,
    ) -> Result<Self, FeatureError> {
        if frames.ncols() != kind.dim() {
            return Err(FeatureError::DimMismatch {
                kind,
                need: kind.dim(),
                got: frames.ncols(),
            });
        }
        for (t, row) in frames.rows().into_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite(t));
            }
        }
        Ok(FeatureSequence {
            kind,
            frames,
            subject_id: subject_id.into(),
            sentence_index,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    /// Write as `FEAT` binary: magic, kind code, T, D (little-endian
    /// u32), then row-major float32 frames.
    pub fn write_feat(&self, path: &Path) -> Result<(), FeatureError> {
        let (t, d) = self.frames.dim();
        let mut buf = Vec::with_capacity(16 + 4 * t * d);
        buf.extend_from_slice(b"FEAT");
        buf.extend_from_slice(&self.kind.code().to_le_bytes());
        buf.extend_from_slice(&(t as u32).to_le_bytes());
        buf.extend_from_slice(&(d as u32).to_le_bytes());
        for row in self.frames.rows() {
            for &v in row {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Read a `FEAT` file; identity comes from the caller since the
    /// format stores only the frames.
    pub fn read_feat(
        path: &Path,
        subject_id: impl Into<String>,
        sentence_index: u32,
    ) -> Result<Self, FeatureError> {
        let bad = |what: &str| FeatureError::BadFile(path.to_path_buf(), what.into());
        let mut f = std::fs::File::open(path)
            .map_err(|e| FeatureError::BadFile(path.to_path_buf(), e.to_string()))?;
        let mut header = [0u8; 16];
        f.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        if &header[0..4] != b"FEAT" {
            return Err(bad("bad magic"));
        }
        let code = u32::from_le_bytes(header[4..8].try_into().unwrap());
        let kind = FeatureKind::from_code(code).ok_or_else(|| bad("unknown kind code"))?;
        let t = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        if d != kind.dim() {
            return Err(bad("width disagrees with kind"));
        }
        let mut payload = Vec::new();
        f.read_to_end(&mut payload)?;
        if payload.len() != 4 * t * d {
            return Err(bad("payload size disagrees with header"));
        }
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let frames = Array2::from_shape_vec((t, d), data).map_err(|_| bad("shape error"))?;
        FeatureSequence::new(kind, frames, subject_id, sentence_index)
    }
}

/// Canonical feature file name for one (subject, sentence, kind).
pub fn feat_path(dir: &Path, subject: &str, sentence: u32, kind: FeatureKind) -> PathBuf {
    dir.join(format!("{subject}_{sentence:03}.{}.feat", kind.tag()))
}

/// Truncate both streams to their common frame count and concatenate
/// each frame, MFCC first.
pub fn align_concat(
    a: &FeatureSequence,
    b: &FeatureSequence,
) -> Result<FeatureSequence, FeatureError> {
    let describe = |s: &FeatureSequence| {
        format!(
            "{} sentence {} ({})",
            s.subject_id,
            s.sentence_index,
            s.kind.tag()
        )
    };
    if a.kind != FeatureKind::Mfcc13 || b.kind != FeatureKind::EegKpca30 {
        return Err(FeatureError::IdentityMismatch(describe(a), describe(b)));
    }
    if a.subject_id != b.subject_id || a.sentence_index != b.sentence_index {
        return Err(FeatureError::IdentityMismatch(describe(a), describe(b)));
    }
    let t = a.len().min(b.len());
    let d = FeatureKind::Concat43.dim();
    let mut frames = Array2::<f64>::zeros((t, d));
    for i in 0..t {
        for (j, &v) in a.frames.row(i).iter().enumerate() {
            frames[(i, j)] = v;
        }
        for (j, &v) in b.frames.row(i).iter().enumerate() {
            frames[(i, 13 + j)] = v;
        }
    }
    FeatureSequence::new(
        FeatureKind::Concat43,
        frames,
        a.subject_id.clone(),
        a.sentence_index,
    )
}

/// Source of feature frames for training and evaluation.
///
/// The protocol code only needs frame matrices keyed by (subject,
/// sentence); tests substitute tiny in-memory stores.
pub trait FeatureProvider {
    /// Frame width of every sequence this provider serves.
    fn input_dim(&self) -> usize;
    /// Frames for one utterance.
    fn frames(&self, subject: &str, sentence: u32) -> Result<&Array2<f64>, FeatureError>;
}

/// Feature store holding every sequence in memory.
pub struct InMemoryFeatureStore {
    dim: usize,
    map: HashMap<(String, u32), Array2<f64>>,
}

impl InMemoryFeatureStore {
    pub fn new(dim: usize) -> Self {
        InMemoryFeatureStore {
            dim,
            map: HashMap::new(),
        }
    }

    pub fn insert(&mut self, seq: FeatureSequence) {
        assert_eq!(seq.frames.ncols(), self.dim, "store dim mismatch");
        self.map
            .insert((seq.subject_id.clone(), seq.sentence_index), seq.frames);
    }

    pub fn insert_frames(&mut self, subject: &str, sentence: u32, frames: Array2<f64>) {
        assert_eq!(frames.ncols(), self.dim, "store dim mismatch");
        self.map.insert((subject.to_string(), sentence), frames);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Load FEAT files for the given subjects from a directory laid out
    /// by [`feat_path`]. `Concat43` loads its two constituent streams
    /// and concatenates on the fly.
    pub fn load(
        dir: &Path,
        kind: FeatureKind,
        subjects: &[String],
        utterances_per_subject: usize,
    ) -> Result<Self, FeatureError> {
        let mut store = InMemoryFeatureStore::new(kind.dim());
        for subject in subjects {
            for sentence in 0..utterances_per_subject as u32 {
                let seq = match kind {
                    FeatureKind::Concat43 => {
                        let a = load_one(dir, subject, sentence, FeatureKind::Mfcc13)?;
                        let b = load_one(dir, subject, sentence, FeatureKind::EegKpca30)?;
                        align_concat(&a, &b)?
                    }
                    _ => load_one(dir, subject, sentence, kind)?,
                };
                store.insert(seq);
            }
        }
        Ok(store)
    }
}

fn load_one(
    dir: &Path,
    subject: &str,
    sentence: u32,
    kind: FeatureKind,
) -> Result<FeatureSequence, FeatureError> {
    let path = feat_path(dir, subject, sentence, kind);
    if !path.is_file() {
        return Err(FeatureError::Missing(subject.to_string(), sentence));
    }
    FeatureSequence::read_feat(&path, subject, sentence)
}

impl FeatureProvider for InMemoryFeatureStore {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn frames(&self, subject: &str, sentence: u32) -> Result<&Array2<f64>, FeatureError> {
        self.map
            .get(&(subject.to_string(), sentence))
            .ok_or_else(|| FeatureError::Missing(subject.to_string(), sentence))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(kind: FeatureKind, t: usize, subject: &str, sentence: u32) -> FeatureSequence {
        let d = kind.dim();
        let frames = Array2::from_shape_fn((t, d), |(i, j)| (i * d + j) as f64 * 0.01);
        FeatureSequence::new(kind, frames, subject, sentence).unwrap()
    }

    #[test]
    fn kind_widths_and_codes_round_trip() {
        for kind in [
            FeatureKind::Mfcc13,
            FeatureKind::Eeg155,
            FeatureKind::EegKpca30,
            FeatureKind::Concat43,
        ] {
            assert_eq!(FeatureKind::from_code(kind.code()), Some(kind));
            assert_eq!(FeatureKind::from_tag(kind.tag()), Some(kind));
        }
        assert_eq!(FeatureKind::Mfcc13.dim(), 13);
        assert_eq!(FeatureKind::Eeg155.dim(), 155);
        assert_eq!(FeatureKind::EegKpca30.dim(), 30);
        assert_eq!(FeatureKind::Concat43.dim(), 43);
    }

    #[test]
    fn new_rejects_wrong_width_and_non_finite() {
        let frames = Array2::zeros((4, 12));
        assert!(matches!(
            FeatureSequence::new(FeatureKind::Mfcc13, frames, "s01", 0),
            Err(FeatureError::DimMismatch { .. })
        ));
        let mut frames = Array2::zeros((4, 13));
        frames[(2, 5)] = f64::NAN;
        assert!(matches!(
            FeatureSequence::new(FeatureKind::Mfcc13, frames, "s01", 0),
            Err(FeatureError::NonFinite(2))
        ));
    }

    #[test]
    fn align_concat_uses_min_length_and_orders_mfcc_first() {
        let a = seq(FeatureKind::Mfcc13, 98, "s01", 3);
        let b = seq(FeatureKind::EegKpca30, 91, "s01", 3);
        let c = align_concat(&a, &b).unwrap();
        assert_eq!(c.frames.dim(), (91, 43));
        for i in 0..91 {
            for j in 0..13 {
                assert_eq!(c.frames[(i, j)], a.frames[(i, j)]);
            }
            for j in 0..30 {
                assert_eq!(c.frames[(i, 13 + j)], b.frames[(i, j)]);
            }
        }
    }

    #[test]
    fn align_concat_rejects_mismatched_identity() {
        let a = seq(FeatureKind::Mfcc13, 10, "s01", 3);
        let b = seq(FeatureKind::EegKpca30, 10, "s01", 4);
        assert!(matches!(
            align_concat(&a, &b),
            Err(FeatureError::IdentityMismatch(_, _))
        ));
        let c = seq(FeatureKind::EegKpca30, 10, "s02", 3);
        assert!(matches!(
            align_concat(&a, &c),
            Err(FeatureError::IdentityMismatch(_, _))
        ));
        // Kinds must be (Mfcc13, EegKpca30) in that order.
        assert!(matches!(
            align_concat(&b, &a),
            Err(FeatureError::IdentityMismatch(_, _))
        ));
    }

    #[test]
    fn feat_file_round_trips() {
        let dir = std::env::temp_dir().join("voxeeg_feat_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let original = seq(FeatureKind::EegKpca30, 17, "s05", 42);
        let path = feat_path(&dir, "s05", 42, FeatureKind::EegKpca30);
        original.write_feat(&path).unwrap();
        let back = FeatureSequence::read_feat(&path, "s05", 42).unwrap();
        assert_eq!(back.kind, FeatureKind::EegKpca30);
        assert_eq!(back.frames.dim(), (17, 30));
        for (a, b) in back.frames.iter().zip(original.frames.iter()) {
            assert!((a - b).abs() <= (*b as f32).abs() as f64 * 1e-7 + 1e-9);
        }
    }

    #[test]
    fn store_serves_inserted_frames() {
        let mut store = InMemoryFeatureStore::new(13);
        store.insert(seq(FeatureKind::Mfcc13, 5, "s01", 0));
        assert_eq!(store.input_dim(), 13);
        assert_eq!(store.frames("s01", 0).unwrap().nrows(), 5);
        assert!(matches!(
            store.frames("s01", 1),
            Err(FeatureError::Missing(_, 1))
        ));
    }
}
