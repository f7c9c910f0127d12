//! Dataset container: one JSON header line plus raw little-endian f32 records.
//!
//! Layout on disk:
//!   line 1    compact JSON header ending in '\n'
//!   then      per sample, back to back: params, sensor_coords, lr_field,
//!             query_coords, hr_targets, each as packed little-endian f32
//!
//! All record lengths are implied by the header, so the format needs no
//! per-record framing and round-trips byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sropnet_core::dataset::{Dataset, DatasetHeader, Family, Layout, SampleRecord};

use crate::errors::{CliError, Result};

pub const FORMAT_TAG: &str = "SROP1";

/// Header line as stored on disk: the dataset header plus format markers.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireHeader {
    format: String,
    family: Family,
    layout: Layout,
    n_samples: usize,
    s: usize,
    lr_shape: Vec<usize>,
    hr_query_count: usize,
    #[serde(default)]
    hr_shape: Option<Vec<usize>>,
    lr_t_range: (f64, f64),
    d: usize,
    param_names: Vec<String>,
    seed: u64,
    endianness: String,
}

impl WireHeader {
    fn from_header(h: &DatasetHeader) -> Self {
        WireHeader {
            format: FORMAT_TAG.into(),
            family: h.family,
            layout: h.layout,
            n_samples: h.n_samples,
            s: h.s,
            lr_shape: h.lr_shape.clone(),
            hr_query_count: h.hr_query_count,
            hr_shape: h.hr_shape.clone(),
            lr_t_range: h.lr_t_range,
            d: h.d,
            param_names: h.param_names.clone(),
            seed: h.seed,
            endianness: "little".into(),
        }
    }

    fn into_header(self) -> DatasetHeader {
        DatasetHeader {
            family: self.family,
            layout: self.layout,
            n_samples: self.n_samples,
            s: self.s,
            lr_shape: self.lr_shape,
            hr_query_count: self.hr_query_count,
            hr_shape: self.hr_shape,
            lr_t_range: self.lr_t_range,
            d: self.d,
            param_names: self.param_names,
            seed: self.seed,
        }
    }
}

fn push_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a dataset to its on-disk byte layout.
pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let wire = WireHeader::from_header(&ds.header);
    let mut buf = serde_json::to_vec(&wire)
        .map_err(|e| CliError::Data(format!("header serialization failed: {e}")))?;
    buf.push(b'\n');
    for rec in &ds.records {
        push_f32s(&mut buf, &rec.params);
        push_f32s(&mut buf, &rec.sensor_coords);
        push_f32s(&mut buf, &rec.lr_field);
        push_f32s(&mut buf, &rec.query_coords);
        push_f32s(&mut buf, &rec.hr_targets);
    }
    Ok(buf)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Sequential little-endian f32 reader that reports the failing byte offset.
struct BlobReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> BlobReader<'a> {
    fn take_f32s(&mut self, count: usize, what: &str, record: usize) -> Result<Vec<f32>> {
        let need = count * 4;
        let end = self.offset + need;
        if end > self.bytes.len() {
            return Err(CliError::Data(format!(
                "truncated at byte {}: record {record} needs {need} bytes of {what}, {} left",
                self.offset,
                self.bytes.len() - self.offset
            )));
        }
        let out = self.bytes[self.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        self.offset = end;
        Ok(out)
    }
}

/// Parse a dataset from its on-disk byte layout.
pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CliError::Data("missing header line (no newline found)".into()))?;
    let text = std::str::from_utf8(&bytes[..nl])
        .map_err(|e| CliError::Data(format!("header is not UTF-8: {e}")))?;
    let wire: WireHeader = serde_json::from_str(text)
        .map_err(|e| CliError::Data(format!("invalid dataset header: {e}")))?;
    if wire.format != FORMAT_TAG {
        return Err(CliError::Data(format!(
            "not a {FORMAT_TAG} file (format tag {:?})",
            wire.format
        )));
    }
    if wire.endianness != "little" {
        return Err(CliError::Data(format!(
            "unsupported endianness {:?}",
            wire.endianness
        )));
    }
    let header = wire.into_header();

    let mut reader = BlobReader {
        bytes,
        offset: nl + 1,
    };
    let n_params = header.param_names.len();
    let mut records = Vec::with_capacity(header.n_samples);
    for i in 0..header.n_samples {
        let rec = SampleRecord {
            params: reader.take_f32s(n_params, "params", i)?,
            sensor_coords: reader.take_f32s(header.sensor_len(), "sensor coords", i)?,
            lr_field: reader.take_f32s(header.lr_len(), "LR field", i)?,
            query_coords: reader.take_f32s(header.query_len(), "query coords", i)?,
            hr_targets: reader.take_f32s(header.target_len(), "HR targets", i)?,
        };
        sropnet_core::dataset::validate_record(&header, &rec, i)
            .map_err(|e| CliError::Data(e.to_string()))?;
        records.push(rec);
    }
    if reader.offset != bytes.len() {
        return Err(CliError::Data(format!(
            "{} trailing bytes after the last record (offset {})",
            bytes.len() - reader.offset,
            reader.offset
        )));
    }
    Ok(Dataset { header, records })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_dataset(&bytes)
}
