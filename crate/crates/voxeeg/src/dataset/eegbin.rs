//! Flat binary EEG storage.
//!
//! Layout: 4-byte magic `EEGF`, then three little-endian u32 fields
//! (channel count, samples per channel, reserved zero), then the
//! samples as little-endian float32, channel-major.

use super::DatasetError;
use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"EEGF";

/// Write a C x S channel-major EEG matrix.
pub fn write_eeg(path: &Path, eeg: &Array2<f32>) -> Result<(), DatasetError> {
    let (channels, samples) = eeg.dim();
    let mut buf = Vec::with_capacity(16 + 4 * channels * samples);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(channels as u32).to_le_bytes());
    buf.extend_from_slice(&(samples as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for row in eeg.rows() {
        for &v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Read an EEG matrix written by [`write_eeg`].
pub fn read_eeg(path: &Path) -> Result<Array2<f32>, DatasetError> {
    let mut f = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DatasetError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let mut header = [0u8; 16];
    f.read_exact(&mut header)
        .map_err(|_| bad(path, "truncated header"))?;
    if &header[0..4] != MAGIC {
        return Err(bad(path, "bad magic"));
    }
    let channels = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let samples = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    if payload.len() != 4 * channels * samples {
        return Err(bad(path, "payload size disagrees with header"));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((channels, samples), data)
        .map_err(|_| bad(path, "shape error"))
}

fn bad(path: &Path, what: &str) -> DatasetError {
    DatasetError::InvalidRecording(format!("{path:?}: {what}"))
}
