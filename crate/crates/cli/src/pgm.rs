//! Binary PGM (P5) rendering with shared scaling across frames.

use std::path::Path;

use crate::errors::{CliError, Result};

/// Map values to bytes with a shared [min, max] scale; a flat field maps
/// to mid-gray so constants stay visible.
pub fn bytes_minmax(values: &[f64], min: f64, max: f64) -> Vec<u8> {
    if max <= min {
        return vec![128; values.len()];
    }
    let span = max - min;
    values
        .iter()
        .map(|&v| {
            let t = ((v - min) / span).clamp(0.0, 1.0);
            (t * 255.0 + 0.5) as u8
        })
        .collect()
}

/// Map nonnegative error values to bytes on a [0, max] scale; an all-zero
/// error renders black.
pub fn bytes_error(values: &[f64], max: f64) -> Vec<u8> {
    if max <= 0.0 {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v.abs() / max).clamp(0.0, 1.0) * 255.0 + 0.5) as u8)
        .collect()
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(CliError::Data(format!(
            "{}x{} image needs {} pixels, got {}",
            width,
            height,
            width * height,
            pixels.len()
        )));
    }
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(pixels);
    std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

/// Write one frame as CSV, one row per grid line, values printed as f32.
pub fn write_csv(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(CliError::Data(format!(
            "{}x{} grid needs {} values, got {}",
            width,
            height,
            width * height,
            values.len()
        )));
    }
    let mut text = String::new();
    for row in values.chunks(width) {
        let mut first = true;
        for &v in row {
            if !first {
                text.push(',');
            }
            first = false;
            text.push_str(&format!("{}", v as f32));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
