//! Model checkpoint files (`.mew`).
//!
//! Layout, little-endian:
//!
//! ```text
//! offset  size      field
//! 0       4         magic "MEWC"
//! 4       4         format version (u32, currently 1)
//! 8       4         meta_len (u32)
//! 12      meta_len  metadata JSON (UTF-8): dims, precompute provenance,
//!                   standardization, tool version
//! ...     8         n_params (u64)
//! ...     4·n       parameter values, float32
//! ...     8         FNV-1a hash (u64) of every preceding byte
//! ```

use super::params::{ModelDims, ModelParams, ParamLayout};
use crate::error::{Error, Result};
use crate::precompute::{fnv1a64, Standardization};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MEWC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Provenance of the features the model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeMeta {
    pub hops: usize,
    pub seed: u64,
    pub stochastic: bool,
    pub resample_each_epoch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub tool_version: String,
    pub dims: ModelDims,
    pub precompute: PrecomputeMeta,
    pub standardize: Option<Standardization>,
    /// Validation metric the checkpoint was selected on, if trained.
    pub selection: Option<SelectionMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMeta {
    pub metric: String,
    pub best_epoch: usize,
    pub best_value: f64,
}

pub fn save_checkpoint(params: &ModelParams, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    if meta.dims != params.dims {
        return Err(Error::DimMismatch {
            expected: "meta dims equal to parameter dims".into(),
            got: "mismatched dims".into(),
        });
    }
    let meta_json = serde_json::to_vec(meta)?;
    let mut buf = Vec::with_capacity(16 + meta_json.len() + 8 + 4 * params.values.len() + 8);
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    buf.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    for &v in &params.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let hash = fnv1a64(&buf);
    buf.extend_from_slice(&hash.to_le_bytes());
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 {
        return Err(Error::TruncatedFile);
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let params_at = 12 + meta_len;
    if bytes.len() < params_at + 8 {
        return Err(Error::TruncatedFile);
    }
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[12..params_at])?;
    let n_params = u64::from_le_bytes(bytes[params_at..params_at + 8].try_into().unwrap()) as usize;
    let expected_len = params_at + 8 + 4 * n_params + 8;
    if bytes.len() != expected_len {
        return Err(Error::TruncatedFile);
    }
    let stored_hash = u64::from_le_bytes(bytes[expected_len - 8..].try_into().unwrap());
    if fnv1a64(&bytes[..expected_len - 8]) != stored_hash {
        return Err(Error::CorruptFile { reason: "content hash mismatch".into() });
    }

    let layout = ParamLayout::build(&meta.dims);
    if layout.total() != n_params {
        return Err(Error::CorruptFile {
            reason: format!(
                "parameter count {n_params} does not match dims (expected {})",
                layout.total()
            ),
        });
    }
    let mut values = Vec::with_capacity(n_params);
    let mut off = params_at + 8;
    for _ in 0..n_params {
        values.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
        off += 4;
    }
    Ok((ModelParams { dims: meta.dims.clone(), layout, values }, meta))
}
