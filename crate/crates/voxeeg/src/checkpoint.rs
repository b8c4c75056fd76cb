//! Encoder checkpoints on disk.
//!
//! The binary file carries a `GE2E` magic, a format version, the cell
//! kind and layer widths, the similarity scalars, then every weight as
//! little-endian f64 in row-major order. Writing the same trained
//! state twice produces byte-identical files. A JSON sidecar at the
//! same path with `.json` appended records how the checkpoint was
//! trained so evaluation can pick matching features without guessing.

use crate::encoder::{CellKind, EncoderParams};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Current binary format version.
pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"GE2E";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint format version {found}, this build reads {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("checkpoint file {0}: {1}")]
    BadFile(PathBuf, String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Training provenance stored next to the binary checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainMeta {
    pub version: u32,
    pub feature_kind: String,
    pub cell_kind: String,
    pub hidden: usize,
    pub embed: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub subjects_per_batch: usize,
    pub sentences_per_step: usize,
    pub seed: u64,
    pub final_loss: f64,
}

/// A loaded model: encoder weights plus the similarity scalars.
pub struct Checkpoint {
    pub params: EncoderParams,
    pub w: f64,
    pub b: f64,
}

/// Sidecar path: the checkpoint path with `.json` appended.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut os = checkpoint.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

fn cell_code(cell: CellKind) -> u32 {
    match cell {
        CellKind::Lstm => 1,
        CellKind::Gru => 2,
    }
}

/// Write the binary checkpoint and its JSON sidecar.
pub fn save_checkpoint(
    path: &Path,
    params: &EncoderParams,
    w: f64,
    b: f64,
    meta: &TrainMeta,
) -> Result<(), CheckpointError> {
    let total = params.num_params() + 2;
    let mut buf = Vec::with_capacity(24 + 8 * total);
    buf.extend_from_slice(MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        cell_code(params.cell),
        params.input_dim as u32,
        params.hidden as u32,
        params.embed as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [w, b] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut push = |v: f64| buf.extend_from_slice(&v.to_le_bytes());
    params.w_cell.iter().for_each(|&v| push(v));
    params.b_cell.iter().for_each(|&v| push(v));
    params.w_dense.iter().for_each(|&v| push(v));
    params.b_dense.iter().for_each(|&v| push(v));
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;

    let mut json = serde_json::to_string_pretty(meta)
        .map_err(|e| CheckpointError::BadFile(sidecar_path(path), e.to_string()))?;
    json.push('\n');
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Read a checkpoint and its sidecar back.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, TrainMeta), CheckpointError> {
    let bad = |what: &str| CheckpointError::BadFile(path.to_path_buf(), what.into());
    let mut f =
        std::fs::File::open(path).map_err(|e| CheckpointError::BadFile(path.to_path_buf(), e.to_string()))?;
    let mut header = [0u8; 24];
    f.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    if &header[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let u = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let version = u(4);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let cell = match u(8) {
        1 => CellKind::Lstm,
        2 => CellKind::Gru,
        other => return Err(bad(&format!("unknown cell code {other}"))),
    };
    let input_dim = u(12) as usize;
    let hidden = u(16) as usize;
    let embed = u(20) as usize;

    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    let gates = cell.gates();
    let counts = [
        gates * hidden * (input_dim + hidden),
        gates * hidden,
        embed * hidden,
        embed,
    ];
    let expected = 8 * (2 + counts.iter().sum::<usize>());
    if payload.len() != expected {
        return Err(bad("payload size disagrees with header"));
    }
    let mut vals = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let w = vals.next().unwrap();
    let b = vals.next().unwrap();
    let mut take = |n: usize| -> Vec<f64> { vals.by_ref().take(n).collect() };
    let w_cell = Array2::from_shape_vec((gates * hidden, input_dim + hidden), take(counts[0]))
        .map_err(|_| bad("shape"))?;
    let b_cell = Array1::from_vec(take(counts[1]));
    let w_dense = Array2::from_shape_vec((embed, hidden), take(counts[2])).map_err(|_| bad("shape"))?;
    let b_dense = Array1::from_vec(take(counts[3]));

    let mut params = crate::encoder::init(cell, input_dim, hidden, embed, 0);
    params.w_cell = w_cell;
    params.b_cell = b_cell;
    params.w_dense = w_dense;
    params.b_dense = b_dense;

    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar)
        .map_err(|e| CheckpointError::BadFile(sidecar.clone(), e.to_string()))?;
    let meta: TrainMeta = serde_json::from_str(&text)
        .map_err(|e| CheckpointError::BadFile(sidecar, e.to_string()))?;
    Ok((Checkpoint { params, w, b }, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder;

    fn meta() -> TrainMeta {
        TrainMeta {
            version: CHECKPOINT_VERSION,
            feature_kind: "concat43".into(),
            cell_kind: "gru".into(),
            hidden: 6,
            embed: 4,
            epochs: 3,
            learning_rate: 0.01,
            grad_clip_norm: 3.0,
            subjects_per_batch: 2,
            sentences_per_step: 3,
            seed: 7,
            final_loss: 0.42,
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = std::env::temp_dir().join("voxeeg_ckpt_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ge2e");
        let params = encoder::init(encoder::CellKind::Gru, 5, 6, 4, 42);
        save_checkpoint(&path, &params, 9.5, -4.75, &meta()).unwrap();
        let (ckpt, back_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt.params.w_cell, params.w_cell);
        assert_eq!(ckpt.params.b_cell, params.b_cell);
        assert_eq!(ckpt.params.w_dense, params.w_dense);
        assert_eq!(ckpt.params.b_dense, params.b_dense);
        assert_eq!(ckpt.params.cell, encoder::CellKind::Gru);
        assert_eq!(ckpt.w, 9.5);
        assert_eq!(ckpt.b, -4.75);
        assert_eq!(back_meta, meta());
    }

    #[test]
    fn writing_twice_is_byte_identical() {
        let dir = std::env::temp_dir().join("voxeeg_ckpt_bytes");
        std::fs::create_dir_all(&dir).unwrap();
        let a = dir.join("a.ge2e");
        let b = dir.join("b.ge2e");
        let params = encoder::init(encoder::CellKind::Lstm, 4, 3, 3, 1);
        save_checkpoint(&a, &params, 10.0, -5.0, &meta()).unwrap();
        save_checkpoint(&b, &params, 10.0, -5.0, &meta()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(
            std::fs::read(sidecar_path(&a)).unwrap(),
            std::fs::read(sidecar_path(&b)).unwrap()
        );
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = std::env::temp_dir().join("voxeeg_ckpt_ver");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ge2e");
        let params = encoder::init(encoder::CellKind::Lstm, 2, 2, 2, 0);
        save_checkpoint(&path, &params, 10.0, -5.0, &meta()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::VersionMismatch {
                found: 99,
                supported: CHECKPOINT_VERSION
            })
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = std::env::temp_dir().join("voxeeg_ckpt_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ge2e");
        std::fs::write(&path, b"GEAR").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadFile(..))
        ));
        let params = encoder::init(encoder::CellKind::Gru, 2, 2, 2, 0);
        save_checkpoint(&path, &params, 10.0, -5.0, &meta()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadFile(..))
        ));
    }
}
