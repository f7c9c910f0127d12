//! Model checkpoints: one JSON manifest line plus a little-endian f32 blob.
//!
//! The manifest names every tensor with its shape and byte offset into the
//! blob, so a checkpoint is self-describing and loads without the config
//! that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sropnet_core::model::{ModelParams, ModelSpec};

use crate::errors::{CliError, Result};

pub const FORMAT_TAG: &str = "SROPCKPT1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTensor {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob that follows the manifest line.
    offset: usize,
    /// Element count.
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireManifest {
    format: String,
    spec: ModelSpec,
    tensors: Vec<WireTensor>,
    endianness: String,
}

/// Serialize a checkpoint to its on-disk byte layout.
pub fn encode_checkpoint(spec: &ModelSpec, params: &ModelParams) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(params.names.len());
    let mut offset = 0usize;
    for ((name, shape), values) in params
        .names
        .iter()
        .zip(&params.shapes)
        .zip(&params.values)
    {
        tensors.push(WireTensor {
            name: name.clone(),
            shape: shape.clone(),
            offset,
            len: values.len(),
        });
        offset += values.len() * 4;
    }
    let manifest = WireManifest {
        format: FORMAT_TAG.into(),
        spec: spec.clone(),
        tensors,
        endianness: "little".into(),
    };
    let mut buf = serde_json::to_vec(&manifest)
        .map_err(|e| CliError::Data(format!("manifest serialization failed: {e}")))?;
    buf.push(b'\n');
    for values in &params.values {
        for &v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn save_checkpoint(path: &Path, spec: &ModelSpec, params: &ModelParams) -> Result<()> {
    let bytes = encode_checkpoint(spec, params)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Parse a checkpoint from its on-disk byte layout.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelSpec, ModelParams)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CliError::Data("missing manifest line (no newline found)".into()))?;
    let text = std::str::from_utf8(&bytes[..nl])
        .map_err(|e| CliError::Data(format!("manifest is not UTF-8: {e}")))?;
    let manifest: WireManifest = serde_json::from_str(text)
        .map_err(|e| CliError::Data(format!("invalid checkpoint manifest: {e}")))?;
    if manifest.format != FORMAT_TAG {
        return Err(CliError::Data(format!(
            "not a {FORMAT_TAG} file (format tag {:?})",
            manifest.format
        )));
    }
    if manifest.endianness != "little" {
        return Err(CliError::Data(format!(
            "unsupported endianness {:?}",
            manifest.endianness
        )));
    }
    manifest
        .spec
        .validate()
        .map_err(|e| CliError::Data(format!("checkpoint carries an invalid model spec: {e}")))?;

    let blob = &bytes[nl + 1..];
    let mut names = Vec::with_capacity(manifest.tensors.len());
    let mut shapes = Vec::with_capacity(manifest.tensors.len());
    let mut values = Vec::with_capacity(manifest.tensors.len());
    let mut expected_offset = 0usize;
    for t in &manifest.tensors {
        let elems: usize = t.shape.iter().product();
        if elems != t.len {
            return Err(CliError::Data(format!(
                "tensor {} declares {} elements but shape {:?} holds {}",
                t.name, t.len, t.shape, elems
            )));
        }
        if t.offset != expected_offset {
            return Err(CliError::Data(format!(
                "tensor {} starts at byte {} but the blob is at byte {}",
                t.name, t.offset, expected_offset
            )));
        }
        let end = t.offset + t.len * 4;
        if end > blob.len() {
            return Err(CliError::Data(format!(
                "truncated blob: tensor {} ends at byte {end}, file holds {}",
                t.name,
                blob.len()
            )));
        }
        let vals: Vec<f64> = blob[t.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        names.push(t.name.clone());
        shapes.push(t.shape.clone());
        values.push(vals);
        expected_offset = end;
    }
    if expected_offset != blob.len() {
        return Err(CliError::Data(format!(
            "{} trailing bytes after the last tensor",
            blob.len() - expected_offset
        )));
    }
    Ok((
        manifest.spec,
        ModelParams {
            names,
            shapes,
            values,
        },
    ))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelSpec, ModelParams)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_checkpoint(&bytes)
}
