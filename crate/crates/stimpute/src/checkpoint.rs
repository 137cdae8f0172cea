//! Checkpoint container: an 8-byte little-endian header length, a UTF-8 JSON
//! header mapping tensor name to `{shape, dtype, offset, frozen}`, then raw
//! little-endian `f32` payloads at the stated offsets.
//!
//! Offsets are byte positions within the payload region (the bytes
//! immediately after the header). Saving always lays tensors out in
//! canonical name order, so save -> load -> save is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    frozen: bool,
}

/// Serialize all named tensors to the container format.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let named = params.named();
    let mut header: BTreeMap<String, TensorMeta> = BTreeMap::new();
    let mut offset = 0u64;
    for (name, p) in &named {
        header.insert(
            name.clone(),
            TensorMeta {
                shape: p.shape.clone(),
                dtype: "f32".to_string(),
                offset,
                frozen: p.frozen,
            },
        );
        offset += (p.len() * 4) as u64;
    }
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::CheckpointHeader(e.to_string()))?;
    let header_bytes = header_json.as_bytes();

    let mut buf = Vec::with_capacity(8 + header_bytes.len() + offset as usize);
    buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(header_bytes);
    for (_, p) in &named {
        for &v in &p.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Load a checkpoint, validating every tensor against the model schema for
/// `config`. Shapes, names, and payload bounds are checked; freeze flags are
/// restored from the file.
pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<ModelParams> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(Error::CheckpointHeader(
            "file too short for the header length prefix".into(),
        ));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    if header_len > (bytes.len() - 8) as u64 {
        return Err(Error::CheckpointHeader(format!(
            "header claims {header_len} bytes but only {} remain",
            bytes.len() - 8
        )));
    }
    let header_len = header_len as usize;
    let header_json = std::str::from_utf8(&bytes[8..8 + header_len])
        .map_err(|e| Error::CheckpointHeader(e.to_string()))?;
    let header: BTreeMap<String, TensorMeta> = serde_json::from_str(header_json)
        .map_err(|e| Error::CheckpointHeader(e.to_string()))?;
    let payload = &bytes[8 + header_len..];

    let mut params = ModelParams::zeros(config)?;
    let schema: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    for name in header.keys() {
        if !schema.contains(name) {
            return Err(Error::UnknownTensor(name.clone()));
        }
    }
    for (name, p) in params.named_mut() {
        let meta = header
            .get(&name)
            .ok_or_else(|| Error::CheckpointHeader(format!("missing tensor `{name}`")))?;
        if meta.dtype != "f32" {
            return Err(Error::CheckpointHeader(format!(
                "tensor `{name}` has unsupported dtype `{}`",
                meta.dtype
            )));
        }
        if meta.shape != p.shape {
            return Err(Error::ShapeMismatch {
                name,
                expected: p.shape.clone(),
                found: meta.shape.clone(),
            });
        }
        let start = meta.offset as usize;
        let nbytes = p.len() * 4;
        if start.checked_add(nbytes).is_none_or(|end| end > payload.len()) {
            return Err(Error::TruncatedPayload(name));
        }
        for (i, v) in p.data.iter_mut().enumerate() {
            let at = start + i * 4;
            *v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap()) as f64;
        }
        p.frozen = meta.frozen;
    }
    Ok(params)
}
