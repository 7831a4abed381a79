//! Checkpoint container.
//!
//! Layout: the 8-byte magic `VMLSTM01`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then every tensor as little-endian `f32` in manifest
//! order. Manifest offsets are byte offsets from the start of the payload.

use serde::{Deserialize, Serialize};

use super::{MlstmDims, MlstmParams, Real, TENSOR_NAMES};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VMLSTM01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dims: MlstmDims,
    vocab_hash: String,
    hyperparams: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// A loaded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: MlstmParams<f32>,
    pub vocab_hash: String,
    pub hyperparams: serde_json::Value,
}

pub fn save_checkpoint<F: Real>(params: &MlstmParams<F>, vocab_hash: &str, hyperparams: &serde_json::Value) -> Vec<u8> {
    let mut tensors = Vec::with_capacity(TENSOR_NAMES.len());
    let mut payload = Vec::with_capacity(params.num_parameters() * 4);
    for (name, t) in params.tensors() {
        tensors.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset: payload.len(), len: t.len() });
        for v in t.iter() {
            payload.extend_from_slice(&v.to_f32().expect("finite parameter").to_le_bytes());
        }
    }
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        dims: params.dims,
        vocab_hash: vocab_hash.to_string(),
        hyperparams: hyperparams.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

/// Reads a container, refusing it when its vocabulary hash differs from
/// `expected_vocab_hash`.
pub fn load_checkpoint(bytes: &[u8], expected_vocab_hash: &str) -> Result<Checkpoint> {
    let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
    if bytes.len() < 16 {
        return Err(corrupt("shorter than magic and header length"));
    }
    let magic = &bytes[..8];
    if magic != CHECKPOINT_MAGIC {
        if magic.starts_with(b"VMLSTM") {
            let found = std::str::from_utf8(&magic[6..]).ok().and_then(|s| s.parse().ok()).unwrap_or(0);
            return Err(Error::CheckpointVersion { found, expected: CHECKPOINT_VERSION });
        }
        return Err(corrupt("bad magic"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end]).map_err(|e| corrupt(&format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: header.format_version, expected: CHECKPOINT_VERSION });
    }
    if header.vocab_hash != expected_vocab_hash {
        return Err(Error::VocabMismatch { found: header.vocab_hash, expected: expected_vocab_hash.to_string() });
    }
    let payload = &bytes[header_end..];
    let mut params = MlstmParams::<f32>::zeros(header.dims);
    if header.tensors.len() != TENSOR_NAMES.len() {
        return Err(corrupt("tensor manifest has the wrong number of entries"));
    }
    for ((name, mut dst), entry) in params.tensors_mut().into_iter().zip(&header.tensors) {
        if entry.name != name || entry.shape != dst.shape() || entry.len != dst.len() {
            return Err(corrupt(&format!("manifest entry {} does not match tensor {name}", entry.name)));
        }
        let end = entry.offset.checked_add(entry.len * 4).filter(|&e| e <= payload.len());
        let Some(end) = end else {
            return Err(corrupt(&format!("payload truncated in tensor {name}")));
        };
        for (d, chunk) in dst.iter_mut().zip(payload[entry.offset..end].chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    Ok(Checkpoint { params, vocab_hash: header.vocab_hash, hyperparams: header.hyperparams })
}
