//! Checkpoint format: magic "SLM1", a little-endian u32 header length, a
//! JSON manifest {formatVersion, hyperparams, tensors}, then the tensor
//! payload as contiguous little-endian 32-bit floats. The vocabulary rides
//! inside the hyperparams object.

use serde_json::{json, Value};
use thiserror::Error;

use super::vocab::Vocab;
use super::{Hyperparams, SlmModel};
use crate::nn::Real;

pub const MAGIC: &[u8; 4] = b"SLM1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("bad magic: not an SLM1 checkpoint")]
    BadMagic,
    #[error("unknown format version {0}")]
    UnknownVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub fn save<T: Real>(model: &SlmModel<T>) -> Vec<u8> {
    let mut payload: Vec<u8> = Vec::new();
    let mut tensors = Vec::new();
    for id in model.params.ids() {
        let t = model.params.get(id);
        let offset = payload.len();
        for v in &t.data {
            payload.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
        tensors.push(json!({
            "name": model.params.name(id),
            "shape": t.shape,
            "byteOffset": offset,
        }));
    }
    let mut hyper = serde_json::to_value(&model.hyper).expect("hyperparams serialize");
    hyper["vocab"] = json!(model.vocab.symbols());
    let manifest = json!({
        "formatVersion": FORMAT_VERSION,
        "hyperparams": hyper,
        "tensors": tensors,
    })
    .to_string();
    let mut out = Vec::with_capacity(8 + manifest.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    out.extend_from_slice(&payload);
    out
}

pub fn load(bytes: &[u8]) -> Result<SlmModel<f32>, CheckpointError> {
    let corrupt = |m: &str| CheckpointError::Corrupt(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8 + header_len;
    if bytes.len() < header_end {
        return Err(corrupt("truncated manifest"));
    }
    let manifest: Value = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| corrupt(&format!("manifest is not JSON: {e}")))?;
    let version = manifest["formatVersion"]
        .as_u64()
        .ok_or_else(|| corrupt("missing formatVersion"))? as u32;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnknownVersion(version));
    }
    let mut hyper_value = manifest
        .get("hyperparams")
        .cloned()
        .ok_or_else(|| corrupt("missing hyperparams"))?;
    let vocab_value = hyper_value
        .as_object_mut()
        .ok_or_else(|| corrupt("hyperparams must be an object"))?
        .remove("vocab")
        .ok_or_else(|| corrupt("missing vocab"))?;
    let symbols: Vec<String> = serde_json::from_value(vocab_value)
        .map_err(|e| corrupt(&format!("bad vocab: {e}")))?;
    let vocab = Vocab::from_symbols(symbols).map_err(|e| corrupt(&format!("{e}")))?;
    let hyper: Hyperparams = serde_json::from_value(hyper_value)
        .map_err(|e| corrupt(&format!("bad hyperparams: {e}")))?;
    let mut model: SlmModel<f32> = SlmModel::new(hyper, vocab, 0)
        .map_err(|e| corrupt(&format!("hyperparams rejected: {e}")))?;
    let payload = &bytes[header_end..];
    let tensors = manifest["tensors"]
        .as_array()
        .ok_or_else(|| corrupt("missing tensors"))?;
    if tensors.len() != model.params.len() {
        return Err(corrupt(&format!(
            "expected {} tensors, manifest has {}",
            model.params.len(),
            tensors.len()
        )));
    }
    for entry in tensors {
        let name = entry["name"].as_str().ok_or_else(|| corrupt("tensor without name"))?;
        let id = model
            .params
            .by_name(name)
            .ok_or_else(|| corrupt(&format!("unknown tensor {name}")))?;
        let shape: Vec<usize> = serde_json::from_value(entry["shape"].clone())
            .map_err(|e| corrupt(&format!("bad shape for {name}: {e}")))?;
        if shape != model.params.get(id).shape {
            return Err(corrupt(&format!(
                "tensor {name} has shape {:?}, expected {:?}",
                shape,
                model.params.get(id).shape
            )));
        }
        let offset = entry["byteOffset"].as_u64().ok_or_else(|| corrupt("missing byteOffset"))? as usize;
        let count = model.params.get(id).len();
        let end = offset + 4 * count;
        if end > payload.len() {
            return Err(corrupt(&format!("tensor {name} exceeds the payload")));
        }
        let data = &mut model.params.get_mut(id).data;
        for (k, chunk) in payload[offset..end].chunks_exact(4).enumerate() {
            data[k] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    Ok(model)
}
