//! `SFC1` checkpoint format, little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `SFC1`                            |
//! | 1     | version (`1`)                           |
//! | 8     | header length `h` (u64)                 |
//! | h     | UTF-8 JSON header                       |
//! | 8     | parameter count `n` (u64)               |
//! | 8n    | parameters, f64, canonical layout order |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{SfnoConfig, SfnoParams};
use super::SfnoError;
use crate::grid::{RadialGrid, SphericalGrid};
use crate::storage::{NormStats, StorageError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SFC1";
pub const CHECKPOINT_VERSION: u8 = 1;

/// One row of the learning curve. `val_loss` is `None` when training ran
/// without a validation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: SfnoConfig,
    norm: NormStats,
    n_lat: usize,
    n_lon: usize,
    radii: Vec<f64>,
    best_epoch: usize,
    curve: Vec<CurvePoint>,
}

/// Trained model plus everything needed to run it on new boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: SfnoParams,
    pub norm: NormStats,
    pub grid: SphericalGrid,
    pub radial: RadialGrid,
    /// Epoch whose parameters were kept (`0` = initialization).
    pub best_epoch: usize,
    pub curve: Vec<CurvePoint>,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>, SfnoError> {
    let header = Header {
        config: ckpt.params.config.clone(),
        norm: ckpt.norm,
        n_lat: ckpt.grid.n_lat(),
        n_lon: ckpt.grid.n_lon(),
        radii: ckpt.radial.radii().to_vec(),
        best_epoch: ckpt.best_epoch,
        curve: ckpt.curve.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let values = &ckpt.params.values;
    let mut out = Vec::with_capacity(4 + 1 + 8 + json.len() + 8 + values.len() * 8);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], SfnoError> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| SfnoError::Format(format!("truncated at byte {pos}", pos = *pos)))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn take_u64(bytes: &[u8], pos: &mut usize) -> Result<usize, SfnoError> {
    let v = u64::from_le_bytes(take(bytes, pos, 8)?.try_into().unwrap());
    usize::try_from(v).map_err(|_| SfnoError::Format(format!("length {v} overflows")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, SfnoError> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != CHECKPOINT_MAGIC {
        return Err(SfnoError::Format("bad magic".into()));
    }
    let version = take(bytes, &mut pos, 1)?[0];
    if version != CHECKPOINT_VERSION {
        return Err(SfnoError::Format(format!(
            "version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let h = take_u64(bytes, &mut pos)?;
    let header: Header = serde_json::from_slice(take(bytes, &mut pos, h)?)?;
    let n = take_u64(bytes, &mut pos)?;
    let raw = take(bytes, &mut pos, n.checked_mul(8).ok_or_else(|| SfnoError::Format("parameter count overflows".into()))?)?;
    if pos != bytes.len() {
        return Err(SfnoError::Format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Checkpoint {
        params: SfnoParams::from_values(&header.config, values)?,
        norm: NormStats::new(header.norm.v_min, header.norm.v_max)?,
        grid: SphericalGrid::new(header.n_lat, header.n_lon)?,
        radial: RadialGrid::from_radii(header.radii)?,
        best_epoch: header.best_epoch,
        curve: header.curve,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), SfnoError> {
    let bytes = encode_checkpoint(ckpt)?;
    std::fs::write(path, bytes).map_err(|source| {
        SfnoError::Storage(StorageError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, SfnoError> {
    let bytes = std::fs::read(path).map_err(|source| {
        SfnoError::Storage(StorageError::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = SfnoConfig {
            n_layers: 1,
            hidden: 3,
            l_max: 3,
            m_max: 4,
            out_channels: 2,
            ..SfnoConfig::default()
        };
        Checkpoint {
            params: SfnoParams::init(&config).unwrap(),
            norm: NormStats::new(250.0, 750.0).unwrap(),
            grid: SphericalGrid::new(4, 8).unwrap(),
            radial: RadialGrid::uniform(3, 30.0, 40.0).unwrap(),
            best_epoch: 2,
            curve: vec![
                CurvePoint {
                    epoch: 1,
                    train_loss: 0.5,
                    val_loss: Some(0.6),
                },
                CurvePoint {
                    epoch: 2,
                    train_loss: 0.1 + 0.2,
                    val_loss: None,
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = encode_checkpoint(&c).unwrap();
        assert_eq!(&bytes[..4], b"SFC1");
        assert_eq!(decode_checkpoint(&bytes).unwrap(), c);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_checkpoint(&bad).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_checkpoint(&long).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sfc");
        save_checkpoint(&sample(), &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), sample());
        assert!(load_checkpoint(&dir.path().join("missing")).is_err());
    }
}
