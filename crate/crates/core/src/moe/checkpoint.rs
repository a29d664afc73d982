//! Parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes          | content                                   |
//! |----------------|-------------------------------------------|
//! | 0..8           | magic `FMOECKP1`                          |
//! | 8..12          | `u32` length `H` of the JSON header       |
//! | 12..12+H       | UTF-8 JSON [`CheckpointHeader`]           |
//! | 12+H..         | `num_values` `f32` values                 |
//!
//! Values follow [`MoEParams::values`] order: gate weight (row-major,
//! `input_dim x num_experts`), gate bias, then for each expert hidden weight,
//! hidden bias, output weight, output bias.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{MoEDims, MoEParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FMOECKP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub dims: MoEDims,
    pub seed: u64,
    pub round: usize,
    pub num_values: usize,
}

pub fn encode(params: &MoEParams, seed: u64, round: usize) -> Vec<u8> {
    let header = CheckpointHeader {
        format: "fedmoe-checkpoint".into(),
        version: 1,
        dims: params.dims,
        seed,
        round,
        num_values: params.param_count(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * header.num_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.values() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(CheckpointHeader, MoEParams)> {
    let bad = |message: &str| Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
    header.dims.validate()?;
    let mut params = MoEParams::zeros(header.dims);
    if params.param_count() != header.num_values {
        return Err(bad("num_values does not match dims"));
    }
    let data = &bytes[12 + len..];
    if data.len() != 4 * header.num_values {
        return Err(bad("value section has wrong length"));
    }
    for (slot, chunk) in params.values_mut().zip(data.chunks_exact(4)) {
        *slot = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
    }
    Ok((header, params))
}

pub fn write(path: &Path, params: &MoEParams, seed: u64, round: usize) -> Result<()> {
    std::fs::write(path, encode(params, seed, round)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<(CheckpointHeader, MoEParams)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
