//! `.ebw` weight files: `EBENW001`, a `u32` LE header length, a JSON header
//! `[{name, shape, offset}]`, then the little-endian `f32` payload. Offsets
//! are byte offsets into the payload.

use std::io;
use std::path::Path;

use eben_core::nn::LayerSpec;
use eben_core::{NnError, WeightStore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"EBENW001";

#[derive(Debug, Error)]
pub enum WeightsFileError {
    #[error("not a weights file (bad magic)")]
    BadMagic,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload truncated: tensor {name} needs bytes up to {needed}, payload has {available}")]
    TruncatedPayload { name: String, needed: usize, available: usize },
    #[error("weights do not fit the configuration: {0}")]
    ShapeMismatchOnLoad(NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

pub fn encode_weights(store: &WeightStore) -> Vec<u8> {
    let mut header = Vec::with_capacity(store.len());
    let mut payload = Vec::with_capacity(4 * store.param_count());
    for (name, t) in store.iter() {
        header.push(HeaderEntry {
            name: name.clone(),
            shape: t.shape.clone(),
            offset: payload.len(),
        });
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

/// Header entries without decoding the payload.
pub fn read_header(bytes: &[u8]) -> Result<(Vec<HeaderEntry>, &[u8]), WeightsFileError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(WeightsFileError::BadMagic);
    }
    let len_bytes: [u8; 4] = bytes
        .get(8..12)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| WeightsFileError::MalformedHeader("missing header length".into()))?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    let json = bytes
        .get(12..12 + len)
        .ok_or_else(|| WeightsFileError::MalformedHeader("header longer than file".into()))?;
    let header: Vec<HeaderEntry> =
        serde_json::from_slice(json).map_err(|e| WeightsFileError::MalformedHeader(e.to_string()))?;
    Ok((header, &bytes[12 + len..]))
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightStore, WeightsFileError> {
    let (header, payload) = read_header(bytes)?;
    let mut store = WeightStore::new();
    for e in header {
        let numel = e
            .shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| WeightsFileError::MalformedHeader(format!("shape of {} overflows", e.name)))?;
        let needed = numel
            .checked_mul(4)
            .and_then(|n| n.checked_add(e.offset))
            .ok_or_else(|| WeightsFileError::MalformedHeader(format!("offset of {} overflows", e.name)))?;
        if needed > payload.len() {
            return Err(WeightsFileError::TruncatedPayload {
                name: e.name,
                needed,
                available: payload.len(),
            });
        }
        let data = payload[e.offset..needed]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store
            .insert(e.name, e.shape, data)
            .map_err(|err| WeightsFileError::MalformedHeader(err.to_string()))?;
    }
    Ok(store)
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<(), WeightsFileError> {
    std::fs::write(path, encode_weights(store))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore, WeightsFileError> {
    decode_weights(&std::fs::read(path)?)
}

/// Loads and checks that every tensor of `layers` is present with the right shape.
pub fn load_weights_for(path: impl AsRef<Path>, layers: &[LayerSpec]) -> Result<WeightStore, WeightsFileError> {
    let store = load_weights(path)?;
    store.check_layout(layers).map_err(WeightsFileError::ShapeMismatchOnLoad)?;
    Ok(store)
}
