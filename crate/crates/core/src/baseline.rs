//! Interpolation baselines: separable cubic interpolation on uniform
//! grids (linear in time) and inverse-distance weighting for scattered
//! sensors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Catmull-Rom weights for the four samples around a cell, at fraction `s`.
fn cr_weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        0.5 * (-s + 2.0 * s2 - s3),
        0.5 * (2.0 - 5.0 * s2 + 3.0 * s3),
        0.5 * (s + 4.0 * s2 - 3.0 * s3),
        0.5 * (-s2 + s3),
    ]
}

/// Cell index and fraction for `x` on a uniform grid, with index clamping
/// at the edges (constant-slope extrapolation outside the grid).
fn locate(grid: &[f64], x: f64) -> (i64, f64) {
    let dx = grid[1] - grid[0];
    let pos = (x - grid[0]) / dx;
    let i = crate::math::floor(pos);
    (i as i64, pos - i)
}

fn clamp_idx(i: i64, n: usize) -> usize {
    i.max(0).min(n as i64 - 1) as usize
}

/// Cubic interpolation of regularly spaced `vals` at `x`.
fn interp_cubic_1d(vals: &[f64], grid: &[f64], x: f64) -> f64 {
    let n = vals.len();
    let (i, s) = locate(grid, x);
    let w = cr_weights(s);
    let mut acc = 0.0;
    for (j, &wj) in w.iter().enumerate() {
        acc += wj * vals[clamp_idx(i + j as i64 - 1, n)];
    }
    acc
}

/// Separable cubic interpolation of one `[n1 x n2]` frame at `(x1, x2)`.
fn interp_cubic_2d(frame: &[f64], g1: &[f64], g2: &[f64], x1: f64, x2: f64) -> f64 {
    let n1 = g1.len();
    let (i, s) = locate(g1, x1);
    let w = cr_weights(s);
    let mut acc = 0.0;
    for (j, &wj) in w.iter().enumerate() {
        let row = clamp_idx(i + j as i64 - 1, n1);
        acc += wj * interp_cubic_1d(&frame[row * g2.len()..(row + 1) * g2.len()], g2, x2);
    }
    acc
}

/// Recover per-axis node grids from axis-major sensor coordinates of a
/// row-major product grid.
pub fn sensor_axis_grids(sensor_coords: &[f64], lr_spatial: &[usize]) -> Result<Vec<Vec<f64>>> {
    let s: usize = lr_spatial.iter().product();
    if sensor_coords.len() != lr_spatial.len() * s {
        return Err(Error::Dimension {
            op: "sensor_axis_grids",
            lhs: vec![sensor_coords.len()],
            rhs: lr_spatial.to_vec(),
        });
    }
    match lr_spatial {
        [n] => Ok(vec![sensor_coords[..*n].to_vec()]),
        [n1, n2] => {
            let g1 = (0..*n1).map(|i| sensor_coords[i * n2]).collect();
            let g2 = sensor_coords[s..s + n2].to_vec();
            Ok(vec![g1, g2])
        }
        other => Err(Error::Config(alloc::format!(
            "grids support 1 or 2 spatial axes, got {}",
            other.len()
        ))),
    }
}

/// Cubic-in-space, linear-in-time interpolation of a gridded LR field.
///
/// `lr_field` holds `lr_times.len()` frames over the product of `grids`;
/// `queries` are `[M x d]` row-major spatial points. Returns predictions
/// `[len(hr_times) x M]`. Query times outside the LR span hold the
/// nearest frame.
pub fn bicubic_grid(
    lr_field: &[f64],
    grids: &[Vec<f64>],
    lr_times: &[f64],
    queries: &[f64],
    hr_times: &[f64],
) -> Result<Vec<f64>> {
    let d = grids.len();
    let n_space: usize = grids.iter().map(|g| g.len()).product();
    let nt = lr_times.len();
    if lr_field.len() != nt * n_space || nt == 0 {
        return Err(Error::Dimension {
            op: "bicubic_grid",
            lhs: vec![lr_field.len()],
            rhs: vec![nt, n_space],
        });
    }
    if grids.iter().any(|g| g.len() < 2) {
        return Err(Error::Config("cubic interpolation needs at least 2 nodes per axis".into()));
    }
    if queries.len() % d != 0 {
        return Err(Error::Dimension {
            op: "bicubic_grid",
            lhs: vec![queries.len()],
            rhs: vec![d],
        });
    }
    let m = queries.len() / d;
    // spatial interpolation once per LR frame
    let mut frame_vals = vec![0.0; nt * m];
    for f in 0..nt {
        let frame = &lr_field[f * n_space..(f + 1) * n_space];
        for q in 0..m {
            let p = &queries[q * d..(q + 1) * d];
            frame_vals[f * m + q] = match d {
                1 => interp_cubic_1d(frame, &grids[0], p[0]),
                _ => interp_cubic_2d(frame, &grids[0], &grids[1], p[0], p[1]),
            };
        }
    }
    // linear interpolation across frames for each output time
    let mut out = Vec::with_capacity(hr_times.len() * m);
    for &t in hr_times {
        if nt == 1 {
            out.extend_from_slice(&frame_vals[..m]);
            continue;
        }
        let dt = lr_times[1] - lr_times[0];
        let pos = (t - lr_times[0]) / dt;
        let i0 = crate::math::floor(pos);
        let frac = pos - i0;
        let lo = clamp_idx(i0 as i64, nt);
        let hi = clamp_idx(i0 as i64 + 1, nt);
        let frac = if (i0 as i64) < 0 {
            0.0
        } else if i0 as i64 >= nt as i64 - 1 {
            0.0
        } else {
            frac
        };
        for q in 0..m {
            out.push((1.0 - frac) * frame_vals[lo * m + q] + frac * frame_vals[hi * m + q]);
        }
    }
    Ok(out)
}

/// Shepard inverse-distance-squared interpolation of scattered sensors.
///
/// Coordinates (axis-major sensors, row-major queries) are normalized per
/// axis to `[-1, 1]` using `axes` before distances are computed; a query
/// within 1e-12 of a sensor returns that sensor's value exactly.
pub fn idw_scattered(
    sensor_coords: &[f64],
    sensor_values: &[f64],
    queries: &[f64],
    axes: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let cd = axes.len();
    let s = sensor_values.len();
    if sensor_coords.len() != cd * s || s == 0 {
        return Err(Error::Dimension {
            op: "idw_scattered",
            lhs: vec![sensor_coords.len()],
            rhs: vec![cd, s],
        });
    }
    if queries.len() % cd != 0 {
        return Err(Error::Dimension {
            op: "idw_scattered",
            lhs: vec![queries.len()],
            rhs: vec![cd],
        });
    }
    let norm = |v: f64, (lo, hi): (f64, f64)| 2.0 * (v - lo) / (hi - lo) - 1.0;
    let m = queries.len() / cd;
    let mut out = Vec::with_capacity(m);
    for q in 0..m {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut exact = None;
        for i in 0..s {
            let mut dist2 = 0.0;
            for (a, &axis) in axes.iter().enumerate() {
                let dz = norm(queries[q * cd + a], axis) - norm(sensor_coords[a * s + i], axis);
                dist2 += dz * dz;
            }
            if dist2 < 1e-24 {
                exact = Some(sensor_values[i]);
                break;
            }
            let w = 1.0 / dist2;
            num += w * sensor_values[i];
            den += w;
        }
        out.push(match exact {
            Some(v) => v,
            None => num / den,
        });
    }
    Ok(out)
}
