//! Model checkpoints.
//!
//! Layout: the 5-byte magic `ZSDN1`, a little-endian `u32` header length,
//! a UTF-8 JSON header, then every parameter as little-endian `f32` values
//! in header order. The header records the network config and, for each
//! parameter, its name, shape and element offset into the data block.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use zsdn_core::nn::Param;
use zsdn_core::{Model, NetConfig};

use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 5] = b"ZSDN1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub net: NetConfig,
    pub params: Vec<ParamEntry>,
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut offset = 0;
    let params = model
        .params()
        .iter()
        .map(|p| {
            let e = ParamEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                offset,
            };
            offset += p.data.len();
            e
        })
        .collect();
    let header = CheckpointHeader {
        net: *model.config(),
        params,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(9 + json.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> AppResult<Model> {
    let bad = |m: &str| AppError::format(path, format!("malformed checkpoint: {m}"));
    if bytes.len() < 9 || &bytes[..5] != MAGIC {
        return Err(bad("missing magic"));
    }
    let len = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
    let json = bytes.get(9..9 + len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| AppError::Json {
        path: path.into(),
        source: e,
    })?;
    let data = &bytes[9 + len..];
    if data.len() % 4 != 0 {
        return Err(bad("data block is not a whole number of f32 values"));
    }
    let values: Vec<f32> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut params = Vec::with_capacity(header.params.len());
    for e in header.params {
        let n: usize = e.shape.iter().product();
        let slice = e
            .offset
            .checked_add(n)
            .and_then(|end| values.get(e.offset..end))
            .ok_or_else(|| bad("parameter extends past the data block"))?;
        params.push(Param {
            name: e.name,
            shape: e.shape,
            data: slice.to_vec(),
        });
    }
    let used: usize = params.iter().map(|p| p.data.len()).sum();
    if used != values.len() {
        return Err(bad("unused trailing data"));
    }
    Ok(Model::from_params(header.net, params)?)
}

pub fn save(model: &Model, path: &Path) -> AppResult<()> {
    fs::write(path, encode(model)).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> AppResult<Model> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use zsdn_core::RngSeed;

    fn tiny() -> Model {
        let cfg = NetConfig {
            base_channels: 2,
            depth: 1,
            feature_channels: 4,
            ..NetConfig::default()
        };
        Model::init(cfg, RngSeed(1)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = tiny();
        let bytes = encode(&m);
        assert_eq!(&bytes[..5], MAGIC);
        assert_eq!(decode(&bytes, Path::new("m")).unwrap(), m);
        assert_eq!(encode(&m), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&tiny());
        let p = Path::new("m");
        assert!(decode(&bytes[..4], p).is_err());
        assert!(decode(&bytes[..bytes.len() - 4], p).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 4]);
        assert!(decode(&extra, p).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(decode(&magic, p).is_err());
        let mut huge = bytes;
        huge[5..9].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&huge, p).is_err());
    }
}
