//! Gridded field container: one JSON header line plus little-endian f32 values.
//!
//! Holds a single scalar field sampled on a regular space-time grid, in
//! frame-major order: `shape = [nt, n1(, n2)]` with the time axis first.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::errors::{CliError, Result};

pub const FORMAT_TAG: &str = "SROPFLD1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub format: String,
    /// `[nt, n1(, n2)]`, time axis first.
    pub shape: Vec<usize>,
    pub time_range: (f64, f64),
    /// Per spatial axis `(lo, hi)`.
    pub space_ranges: Vec<(f64, f64)>,
    /// Dataset sample index the field was produced from.
    pub sample: usize,
    /// Provenance label, e.g. "prediction", "truth", "lr".
    pub source: String,
    pub endianness: String,
}

impl FieldHeader {
    pub fn new(
        shape: Vec<usize>,
        time_range: (f64, f64),
        space_ranges: Vec<(f64, f64)>,
        sample: usize,
        source: &str,
    ) -> Self {
        FieldHeader {
            format: FORMAT_TAG.into(),
            shape,
            time_range,
            space_ranges,
            sample,
            source: source.into(),
            endianness: "little".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    /// Frame count and per-frame (height, width) for rendering.
    pub fn frame_geometry(&self) -> Result<(usize, usize, usize)> {
        match self.shape.len() {
            2 => Ok((self.shape[0], 1, self.shape[1])),
            3 => Ok((self.shape[0], self.shape[1], self.shape[2])),
            n => Err(CliError::Data(format!(
                "field shape must have 2 or 3 axes, got {n}"
            ))),
        }
    }
}

pub fn write_field(path: &Path, header: &FieldHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.len() {
        return Err(CliError::Data(format!(
            "field shape {:?} holds {} values, got {}",
            header.shape,
            header.len(),
            values.len()
        )));
    }
    let mut buf = serde_json::to_vec(header)
        .map_err(|e| CliError::Data(format!("field header serialization failed: {e}")))?;
    buf.push(b'\n');
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn read_field(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CliError::Data("missing field header line (no newline found)".into()))?;
    let text = std::str::from_utf8(&bytes[..nl])
        .map_err(|e| CliError::Data(format!("field header is not UTF-8: {e}")))?;
    let header: FieldHeader = serde_json::from_str(text)
        .map_err(|e| CliError::Data(format!("invalid field header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(CliError::Data(format!(
            "not a {FORMAT_TAG} file (format tag {:?})",
            header.format
        )));
    }
    if header.endianness != "little" {
        return Err(CliError::Data(format!(
            "unsupported endianness {:?}",
            header.endianness
        )));
    }
    let blob = &bytes[nl + 1..];
    let need = header.len() * 4;
    if blob.len() != need {
        return Err(CliError::Data(format!(
            "field blob holds {} bytes at offset {}, shape {:?} needs {need}",
            blob.len(),
            nl + 1,
            header.shape
        )));
    }
    let values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, values))
}
