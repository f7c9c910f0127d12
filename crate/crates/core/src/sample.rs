//! Random initial states, forcing parameters, and scattered
//! observation locations, all drawn from counter-based streams.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::pde::{Domain, Forcing};
use crate::rng::CounterRng;

/// A 1D initial state built from constant-valued intervals.
///
/// Each piece is `(center, half_width, value)`; later pieces overwrite
/// earlier ones where they overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalState {
    pub pieces: Vec<(f64, f64, f64)>,
}

/// A 2D initial state built from constant-valued disks.
///
/// Each disk is `(c1, c2, radius, value)`; later disks overwrite earlier
/// ones where they overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskState {
    pub disks: Vec<(f64, f64, f64, f64)>,
}

/// Draw 1 to 5 intervals: center uniform over the spatial extent,
/// half-width U[0.1, 0.4], value U[0, 1].
pub fn sample_intervals(rng: &mut CounterRng, x_range: (f64, f64)) -> IntervalState {
    let k = 1 + rng.uniform_int(5) as usize;
    let mut pieces = Vec::with_capacity(k);
    for _ in 0..k {
        let center = rng.uniform(x_range.0, x_range.1);
        let half_width = rng.uniform(0.1, 0.4);
        let value = rng.uniform(0.0, 1.0);
        pieces.push((center, half_width, value));
    }
    IntervalState { pieces }
}

impl IntervalState {
    /// Evaluate on a node grid; the first and last node are forced to zero.
    pub fn eval_grid(&self, xs: &[f64]) -> Vec<f64> {
        let n = xs.len();
        let mut out = vec![0.0; n];
        for &(c, hw, v) in &self.pieces {
            for (i, &x) in xs.iter().enumerate() {
                if (x - c).abs() <= hw {
                    out[i] = v;
                }
            }
        }
        if n > 0 {
            out[0] = 0.0;
            out[n - 1] = 0.0;
        }
        out
    }
}

/// Draw 1 to 5 disks: center uniform over each spatial extent,
/// radius U[0.2, 0.8], value U[0, 1].
pub fn sample_disks(rng: &mut CounterRng, x1_range: (f64, f64), x2_range: (f64, f64)) -> DiskState {
    let k = 1 + rng.uniform_int(5) as usize;
    let mut disks = Vec::with_capacity(k);
    for _ in 0..k {
        let c1 = rng.uniform(x1_range.0, x1_range.1);
        let c2 = rng.uniform(x2_range.0, x2_range.1);
        let radius = rng.uniform(0.2, 0.8);
        let value = rng.uniform(0.0, 1.0);
        disks.push((c1, c2, radius, value));
    }
    DiskState { disks }
}

impl DiskState {
    /// Evaluate on the product grid `g1 x g2`, row-major with `g2` contiguous.
    pub fn eval_grid(&self, g1: &[f64], g2: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g1.len() * g2.len()];
        for &(c1, c2, r, v) in &self.disks {
            for (i, &x1) in g1.iter().enumerate() {
                for (j, &x2) in g2.iter().enumerate() {
                    let d1 = x1 - c1;
                    let d2 = x2 - c2;
                    if d1 * d1 + d2 * d2 <= r * r {
                        out[i * g2.len() + j] = v;
                    }
                }
            }
        }
        out
    }
}

/// Draw spiral forcing parameters: center uniform in [1, 3]^2, amplitude
/// U[0.5, 1.5], pitch U[0.05, 0.15], half-width U[0.05, 0.1].
pub fn sample_spiral(rng: &mut CounterRng) -> Forcing {
    let cx = rng.uniform(1.0, 3.0);
    let cy = rng.uniform(1.0, 3.0);
    let amplitude = rng.uniform(0.5, 1.5);
    let pitch = rng.uniform(0.05, 0.15);
    let half_width = rng.uniform(0.05, 0.1);
    Forcing::Spiral {
        center: (cx, cy),
        amplitude,
        pitch,
        half_width,
    }
}

/// Scattered space-time observation locations.
///
/// `count` must be a positive multiple of `n_times`. Times form a uniform
/// grid over the domain's span; within each time slice the spatial
/// coordinates are drawn uniformly from the open interior and sorted
/// ascending (lexicographically for d > 1). Rows of `(t, x...)` come back
/// flattened, slice by slice, so the whole list is sorted by `(t, x)`.
pub fn sample_locations(
    rng: &mut CounterRng,
    count: usize,
    n_times: usize,
    domain: &Domain,
) -> Result<Vec<f64>> {
    if count == 0 || n_times == 0 || count % n_times != 0 {
        return Err(Error::Config(alloc::format!(
            "count ({count}) must be a positive multiple of n_times ({n_times})"
        )));
    }
    let per_slice = count / n_times;
    let d = domain.dim();
    let ts = if n_times == 1 {
        vec![domain.time.0]
    } else {
        crate::pde::linspace(domain.time.0, domain.time.1, n_times)
    };
    let mut out = Vec::with_capacity(count * (d + 1));
    let mut slice_pts: Vec<Vec<f64>> = Vec::with_capacity(per_slice);
    for &t in &ts {
        slice_pts.clear();
        for _ in 0..per_slice {
            let pt: Vec<f64> = domain
                .space
                .iter()
                .map(|&(lo, hi)| loop {
                    let v = rng.uniform(lo, hi);
                    if v > lo && v < hi {
                        break v;
                    }
                })
                .collect();
            slice_pts.push(pt);
        }
        slice_pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        for pt in &slice_pts {
            out.push(t);
            out.extend_from_slice(pt);
        }
    }
    Ok(out)
}
