//! Experiment families and deterministic LR/HR dataset construction.
//!
//! Each sample is drawn from its own counter-based substream, so records
//! are identical regardless of generation order, and a rebuilt dataset
//! is bit-identical to the original.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::pde::{self, Domain, Forcing};
use crate::rng::CounterRng;
use crate::sample;

/// How a record's targets and queries are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Layout {
    /// Fixed LR/HR grids; queries are spatial points evaluated at every
    /// HR frame time, targets are `[T+ x M]`.
    Temporal,
    /// Scattered space-time sensors and queries; targets are `[M]`.
    Spacetime,
}

/// The built-in experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Family {
    /// 1D diffusion, parametric forcing, zero initial state.
    #[cfg_attr(feature = "serde", serde(rename = "exp1"))]
    Exp1,
    /// 1D diffusion, fixed forcing, random piecewise-constant initial states.
    #[cfg_attr(feature = "serde", serde(rename = "exp2"))]
    Exp2,
    /// 1D diffusion with an analytic solution, scattered sensor and
    /// prediction locations.
    #[cfg_attr(feature = "serde", serde(rename = "exp3"))]
    Exp3,
    /// 2D diffusion, fixed diffusivity, random disk initial states.
    #[cfg_attr(feature = "serde", serde(rename = "diff2d"))]
    Diff2d,
    /// 2D diffusion with per-sample diffusivity.
    #[cfg_attr(feature = "serde", serde(rename = "diff2d-var"))]
    Diff2dVar,
    /// 2D diffusion with disk initial states and spiral forcing.
    #[cfg_attr(feature = "serde", serde(rename = "forced2d"))]
    Forced2d,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Exp1 => "exp1",
            Family::Exp2 => "exp2",
            Family::Exp3 => "exp3",
            Family::Diff2d => "diff2d",
            Family::Diff2dVar => "diff2d-var",
            Family::Forced2d => "forced2d",
        }
    }

    pub fn parse(name: &str) -> Result<Family> {
        Ok(match name {
            "exp1" => Family::Exp1,
            "exp2" => Family::Exp2,
            "exp3" => Family::Exp3,
            "diff2d" => Family::Diff2d,
            "diff2d-var" => Family::Diff2dVar,
            "forced2d" => Family::Forced2d,
            other => {
                return Err(Error::Config(alloc::format!(
                    "unknown family '{other}' (expected exp1, exp2, exp3, diff2d, diff2d-var, forced2d)"
                )))
            }
        })
    }

    pub fn layout(&self) -> Layout {
        match self {
            Family::Exp3 => Layout::Spacetime,
            _ => Layout::Temporal,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Family::Exp1 => Domain::new_1d((-1.0, 1.0), (0.0, 2.0)),
            Family::Exp2 => Domain::new_1d((0.0, 2.0), (0.0, 1.0)),
            Family::Exp3 => Domain::new_1d((-1.0, 1.0), (0.0, 2.0)),
            Family::Diff2d | Family::Diff2dVar | Family::Forced2d => {
                Domain::new_2d((0.0, 4.0), (0.0, 4.0), (0.0, 1.0))
            }
        }
    }

    pub fn spatial_dim(&self) -> usize {
        self.domain().dim()
    }

    /// Fixed diffusivity, or `None` when it is a per-sample draw.
    pub fn diffusivity(&self) -> Option<f64> {
        match self {
            Family::Exp1 => Some(1e-3),
            Family::Exp2 => Some(0.02),
            Family::Exp3 => Some(1.0),
            Family::Diff2d => Some(0.15),
            Family::Diff2dVar => None,
            Family::Forced2d => Some(0.1),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            Family::Exp1 | Family::Exp3 => &["alpha", "beta", "diffusivity"],
            Family::Exp2 | Family::Diff2d | Family::Diff2dVar => &["diffusivity"],
            Family::Forced2d => &[
                "diffusivity",
                "spiral_cx",
                "spiral_cy",
                "spiral_amplitude",
                "spiral_pitch",
                "spiral_half_width",
            ],
        };
        names.iter().map(|s| String::from(*s)).collect()
    }

    /// Reconstruct the forcing term and diffusivity from stored parameters.
    pub fn decode_params(&self, params: &[f32]) -> Result<(Forcing, f64)> {
        let need = self.param_names().len();
        if params.len() != need {
            return Err(Error::Contract(alloc::format!(
                "{} expects {need} parameters, got {}",
                self.name(),
                params.len()
            )));
        }
        let p: Vec<f64> = params.iter().map(|&v| v as f64).collect();
        Ok(match self {
            Family::Exp1 => (
                Forcing::Exp1 {
                    alpha: p[0],
                    beta: p[1],
                },
                p[2],
            ),
            Family::Exp2 => (Forcing::Exp2, p[0]),
            Family::Exp3 => (
                Forcing::Exp3 {
                    alpha: p[0],
                    beta: p[1],
                },
                p[2],
            ),
            Family::Diff2d | Family::Diff2dVar => (Forcing::None, p[0]),
            Family::Forced2d => (
                Forcing::Spiral {
                    center: (p[1], p[2]),
                    amplitude: p[3],
                    pitch: p[4],
                    half_width: p[5],
                },
                p[0],
            ),
        })
    }
}

/// How LR fields are produced from a sample's problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LrMode {
    /// Re-run the solver at LR resolution from the restricted initial state.
    CoarseSolve,
    /// Strided subsampling of the HR field (factors must divide exactly).
    Downsample,
}

/// Everything needed to build one dataset deterministically.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetConfig {
    pub family: Family,
    pub n_samples: usize,
    pub seed: u64,
    /// LR frame count (spacetime: number of sensor time slices).
    pub lr_frames: usize,
    /// LR nodes per spatial axis (spacetime: sensors per time slice).
    pub lr_spatial: Vec<usize>,
    /// HR frame count (spacetime: number of query time slices).
    pub hr_frames: usize,
    /// HR nodes per spatial axis (spacetime: queries per time slice).
    pub hr_spatial: Vec<usize>,
    pub lr_mode: LrMode,
    /// Keep only the first F LR frames (temporal layouts only).
    pub partial_frames: Option<usize>,
    pub alpha_range: Option<(f64, f64)>,
    pub beta_range: Option<(f64, f64)>,
    pub diffusivity_range: Option<(f64, f64)>,
}

impl DatasetConfig {
    /// The published resolutions for a family.
    pub fn defaults(family: Family, n_samples: usize, seed: u64) -> Self {
        let (lr_frames, lr_spatial, hr_frames, hr_spatial) = match family {
            Family::Exp1 => (40, vec![16], 80, vec![64]),
            Family::Exp2 => (50, vec![24], 100, vec![96]),
            Family::Exp3 => (12, vec![12], 60, vec![60]),
            Family::Diff2d => (25, vec![24, 24], 50, vec![72, 72]),
            Family::Diff2dVar => (100, vec![24, 24], 100, vec![72, 72]),
            Family::Forced2d => (30, vec![24, 24], 30, vec![72, 72]),
        };
        DatasetConfig {
            family,
            n_samples,
            seed,
            lr_frames,
            lr_spatial,
            hr_frames,
            hr_spatial,
            lr_mode: LrMode::CoarseSolve,
            partial_frames: None,
            alpha_range: None,
            beta_range: None,
            diffusivity_range: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.family.spatial_dim();
        if self.lr_spatial.len() != d || self.hr_spatial.len() != d {
            return Err(Error::Config(alloc::format!(
                "{} needs {d} spatial resolution(s), got lr={:?}, hr={:?}",
                self.family.name(),
                self.lr_spatial,
                self.hr_spatial
            )));
        }
        match self.family.layout() {
            Layout::Temporal => {
                if self.lr_frames < 2 || self.hr_frames < 2 {
                    return Err(Error::Config("frame counts must be at least 2".into()));
                }
                if self.lr_spatial.iter().chain(&self.hr_spatial).any(|&n| n < 3) {
                    return Err(Error::Config("spatial resolutions must be at least 3".into()));
                }
                if self.hr_frames < self.lr_frames {
                    return Err(Error::Config(
                        "HR frame count must be at least the LR frame count".into(),
                    ));
                }
                if let Some(f) = self.partial_frames {
                    if f < 2 || f > self.lr_frames {
                        return Err(Error::Config(alloc::format!(
                            "partial frame count {f} must lie in [2, {}]",
                            self.lr_frames
                        )));
                    }
                }
                if self.lr_mode == LrMode::Downsample {
                    if self.hr_frames % self.lr_frames != 0 {
                        return Err(Error::Config(alloc::format!(
                            "downsample needs lr frames ({}) to divide hr frames ({})",
                            self.lr_frames,
                            self.hr_frames
                        )));
                    }
                    for (l, h) in self.lr_spatial.iter().zip(&self.hr_spatial) {
                        if h % l != 0 {
                            return Err(Error::Config(alloc::format!(
                                "downsample needs lr resolution ({l}) to divide hr resolution ({h})"
                            )));
                        }
                    }
                }
            }
            Layout::Spacetime => {
                if self.lr_frames < 1 || self.lr_spatial[0] < 1 {
                    return Err(Error::Config("sensor grid must be nonempty".into()));
                }
                if self.hr_frames < 1 || self.hr_spatial[0] < 1 {
                    return Err(Error::Config("query grid must be nonempty".into()));
                }
                if self.partial_frames.is_some() {
                    return Err(Error::Config(
                        "partial frames only apply to temporal layouts".into(),
                    ));
                }
                if self.lr_mode == LrMode::Downsample {
                    return Err(Error::Config(
                        "downsample mode only applies to temporal layouts".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sensor count: spatial nodes (temporal) or scattered points (spacetime).
    pub fn sensor_count(&self) -> usize {
        match self.family.layout() {
            Layout::Temporal => self.lr_spatial.iter().product(),
            Layout::Spacetime => self.lr_frames * self.lr_spatial[0],
        }
    }
}

/// Shape and provenance of every record in a dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetHeader {
    pub family: Family,
    pub layout: Layout,
    pub n_samples: usize,
    /// Sensor count.
    pub s: usize,
    /// `[T, N1(, N2)]` for temporal layouts; `[s]` for spacetime.
    pub lr_shape: Vec<usize>,
    /// Rows of `query_coords` (spatial points for temporal layouts).
    pub hr_query_count: usize,
    /// `[T+, M1(, M2)]` for temporal layouts; absent for spacetime.
    #[cfg_attr(feature = "serde", serde(default))]
    pub hr_shape: Option<Vec<usize>>,
    /// Time span actually covered by the LR frames (differs from the
    /// domain span when the dataset is truncated to partial frames).
    pub lr_t_range: (f64, f64),
    /// Spatial dimension.
    pub d: usize,
    pub param_names: Vec<String>,
    pub seed: u64,
}

impl DatasetHeader {
    /// Columns of a coordinate row: `d` (temporal) or `d + 1` (spacetime).
    pub fn coord_dim(&self) -> usize {
        match self.layout {
            Layout::Temporal => self.d,
            Layout::Spacetime => self.d + 1,
        }
    }

    pub fn lr_len(&self) -> usize {
        self.lr_shape.iter().product()
    }

    pub fn sensor_len(&self) -> usize {
        self.coord_dim() * self.s
    }

    pub fn query_len(&self) -> usize {
        self.hr_query_count * self.coord_dim()
    }

    pub fn target_len(&self) -> usize {
        match self.layout {
            Layout::Temporal => {
                let t_plus = self.hr_shape.as_ref().map(|s| s[0]).unwrap_or(1);
                t_plus * self.hr_query_count
            }
            Layout::Spacetime => self.hr_query_count,
        }
    }

    /// HR frame count for temporal layouts, 1 otherwise.
    pub fn hr_frames(&self) -> usize {
        self.hr_shape.as_ref().map(|s| s[0]).unwrap_or(1)
    }

    /// Uniform frame times covered by the LR field.
    pub fn lr_frame_times(&self) -> Vec<f64> {
        let t = self.lr_shape[0];
        match self.layout {
            Layout::Temporal => pde::linspace(self.lr_t_range.0, self.lr_t_range.1, t),
            Layout::Spacetime => Vec::new(),
        }
    }

    /// Uniform frame times of the HR targets (temporal layouts).
    pub fn hr_frame_times(&self) -> Vec<f64> {
        let (t0, t1) = self.family.domain().time;
        pde::linspace(t0, t1, self.hr_frames())
    }
}

/// One LR/HR training pair, stored exactly as serialized (32-bit floats).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleRecord {
    pub params: Vec<f32>,
    /// Axis-major: row `a` holds coordinate axis `a` of every sensor.
    pub sensor_coords: Vec<f32>,
    pub lr_field: Vec<f32>,
    /// Row-major: one `(t,) x...` row per query point.
    pub query_coords: Vec<f32>,
    pub hr_targets: Vec<f32>,
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

impl SampleRecord {
    pub fn params_f64(&self) -> Vec<f64> {
        widen(&self.params)
    }
    pub fn sensor_f64(&self) -> Vec<f64> {
        widen(&self.sensor_coords)
    }
    pub fn lr_f64(&self) -> Vec<f64> {
        widen(&self.lr_field)
    }
    pub fn query_f64(&self) -> Vec<f64> {
        widen(&self.query_coords)
    }
    pub fn targets_f64(&self) -> Vec<f64> {
        widen(&self.hr_targets)
    }
}

/// A fully materialized dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<SampleRecord>,
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Per-axis LR node coordinates plus LR frame times for temporal layouts.
///
/// Coarse solves use native node grids; downsampling uses the strided HR
/// nodes, which share spacing but not the far endpoint.
fn lr_grids(cfg: &DatasetConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let domain = cfg.family.domain();
    let (t0, t1) = domain.time;
    match cfg.lr_mode {
        LrMode::CoarseSolve => {
            let grids = domain
                .space
                .iter()
                .zip(&cfg.lr_spatial)
                .map(|(&(lo, hi), &n)| pde::linspace(lo, hi, n))
                .collect();
            (grids, pde::linspace(t0, t1, cfg.lr_frames))
        }
        LrMode::Downsample => {
            let grids = domain
                .space
                .iter()
                .zip(cfg.lr_spatial.iter().zip(&cfg.hr_spatial))
                .map(|(&(lo, hi), (&nl, &nh))| {
                    let hr = pde::linspace(lo, hi, nh);
                    let stride = nh / nl;
                    (0..nl).map(|i| hr[i * stride]).collect()
                })
                .collect();
            let hr_t = pde::linspace(t0, t1, cfg.hr_frames);
            let stride = cfg.hr_frames / cfg.lr_frames;
            let times = (0..cfg.lr_frames).map(|i| hr_t[i * stride]).collect();
            (grids, times)
        }
    }
}

/// Strided subsampling of a temporal HR field onto the LR shape.
///
/// `hr_shape` and `lr_shape` are `[T, N1(, N2)]`; every LR extent must
/// divide its HR counterpart.
pub fn downsample_field(hr: &[f64], hr_shape: &[usize], lr_shape: &[usize]) -> Result<Vec<f64>> {
    if hr_shape.len() != lr_shape.len() || hr_shape.is_empty() {
        return Err(Error::Dimension {
            op: "downsample_field",
            lhs: hr_shape.to_vec(),
            rhs: lr_shape.to_vec(),
        });
    }
    if hr.len() != hr_shape.iter().product::<usize>() {
        return Err(Error::Dimension {
            op: "downsample_field",
            lhs: vec![hr.len()],
            rhs: hr_shape.to_vec(),
        });
    }
    let mut strides = Vec::with_capacity(hr_shape.len());
    for (&h, &l) in hr_shape.iter().zip(lr_shape) {
        if l == 0 || h % l != 0 {
            return Err(Error::Config(alloc::format!(
                "downsample factor must divide exactly ({h} into {l} parts)"
            )));
        }
        strides.push(h / l);
    }
    let mut out = Vec::with_capacity(lr_shape.iter().product());
    match lr_shape.len() {
        2 => {
            for i in 0..lr_shape[0] {
                for j in 0..lr_shape[1] {
                    out.push(hr[i * strides[0] * hr_shape[1] + j * strides[1]]);
                }
            }
        }
        3 => {
            for i in 0..lr_shape[0] {
                for j in 0..lr_shape[1] {
                    for k in 0..lr_shape[2] {
                        out.push(
                            hr[(i * strides[0] * hr_shape[1] + j * strides[1]) * hr_shape[2]
                                + k * strides[2]],
                        );
                    }
                }
            }
        }
        n => {
            return Err(Error::Config(alloc::format!(
                "downsample supports 2 or 3 axes, got {n}"
            )))
        }
    }
    Ok(out)
}

/// Axis-major sensor coordinates for a product grid enumerated row-major.
fn grid_sensor_coords(grids: &[Vec<f64>]) -> Vec<f64> {
    let s: usize = grids.iter().map(|g| g.len()).product();
    let mut out = Vec::with_capacity(grids.len() * s);
    match grids.len() {
        1 => out.extend_from_slice(&grids[0]),
        2 => {
            for x1 in &grids[0] {
                for _ in &grids[1] {
                    out.push(*x1);
                }
            }
            for _ in &grids[0] {
                out.extend_from_slice(&grids[1]);
            }
        }
        _ => unreachable!("spatial dimension is 1 or 2"),
    }
    out
}

/// Row-major query coordinates for a product grid, one row per node.
fn grid_query_coords(grids: &[Vec<f64>]) -> Vec<f64> {
    match grids.len() {
        1 => grids[0].clone(),
        2 => {
            let mut out = Vec::with_capacity(2 * grids[0].len() * grids[1].len());
            for x1 in &grids[0] {
                for x2 in &grids[1] {
                    out.push(*x1);
                    out.push(*x2);
                }
            }
            out
        }
        _ => unreachable!("spatial dimension is 1 or 2"),
    }
}

/// Per-sample random draws, in a fixed documented order.
struct SampleDraws {
    params: Vec<f64>,
    forcing: Forcing,
    diffusivity: f64,
    init_1d: Option<sample::IntervalState>,
    init_2d: Option<sample::DiskState>,
}

/// Draw order per family (one substream per sample index):
/// exp1/exp3: alpha, beta. exp2: interval pieces. diff2d: disk pieces.
/// diff2d-var: diffusivity, then disk pieces. forced2d: disk pieces, then
/// spiral parameters.
fn draw_sample(cfg: &DatasetConfig, rng: &mut CounterRng) -> SampleDraws {
    let domain = cfg.family.domain();
    match cfg.family {
        Family::Exp1 | Family::Exp3 => {
            let (a_lo, a_hi) = cfg.alpha_range.unwrap_or(match cfg.family {
                Family::Exp1 => (-6.0, 6.0),
                _ => (-8.0, 8.0),
            });
            let (b_lo, b_hi) = cfg.beta_range.unwrap_or(match cfg.family {
                Family::Exp1 => (-1.0, 1.0),
                _ => (-1.0, 0.0),
            });
            let alpha = rng.uniform(a_lo, a_hi);
            let beta = rng.uniform(b_lo, b_hi);
            let d_coeff = cfg.family.diffusivity().expect("fixed diffusivity");
            let forcing = match cfg.family {
                Family::Exp1 => Forcing::Exp1 { alpha, beta },
                _ => Forcing::Exp3 { alpha, beta },
            };
            SampleDraws {
                params: vec![alpha, beta, d_coeff],
                forcing,
                diffusivity: d_coeff,
                init_1d: None,
                init_2d: None,
            }
        }
        Family::Exp2 => {
            let init = sample::sample_intervals(rng, domain.space[0]);
            SampleDraws {
                params: vec![0.02],
                forcing: Forcing::Exp2,
                diffusivity: 0.02,
                init_1d: Some(init),
                init_2d: None,
            }
        }
        Family::Diff2d => {
            let init = sample::sample_disks(rng, domain.space[0], domain.space[1]);
            SampleDraws {
                params: vec![0.15],
                forcing: Forcing::None,
                diffusivity: 0.15,
                init_1d: None,
                init_2d: Some(init),
            }
        }
        Family::Diff2dVar => {
            let (lo, hi) = cfg.diffusivity_range.unwrap_or((0.1, 0.4));
            let d_coeff = rng.uniform(lo, hi);
            let init = sample::sample_disks(rng, domain.space[0], domain.space[1]);
            SampleDraws {
                params: vec![d_coeff],
                forcing: Forcing::None,
                diffusivity: d_coeff,
                init_1d: None,
                init_2d: Some(init),
            }
        }
        Family::Forced2d => {
            let init = sample::sample_disks(rng, domain.space[0], domain.space[1]);
            let forcing = sample::sample_spiral(rng);
            let params = match &forcing {
                Forcing::Spiral {
                    center,
                    amplitude,
                    pitch,
                    half_width,
                } => vec![0.1, center.0, center.1, *amplitude, *pitch, *half_width],
                _ => unreachable!(),
            };
            SampleDraws {
                params,
                forcing,
                diffusivity: 0.1,
                init_1d: None,
                init_2d: Some(init),
            }
        }
    }
}

/// Evaluate a sample's initial state on arbitrary per-axis grids.
fn eval_init(draws: &SampleDraws, grids: &[Vec<f64>]) -> Vec<f64> {
    if let Some(iv) = &draws.init_1d {
        iv.eval_grid(&grids[0])
    } else if let Some(ds) = &draws.init_2d {
        ds.eval_grid(&grids[0], &grids[1])
    } else {
        vec![0.0; grids.iter().map(|g| g.len()).product()]
    }
}

fn solve_on(
    cfg: &DatasetConfig,
    draws: &SampleDraws,
    grids: &[Vec<f64>],
    nt: usize,
) -> Result<Vec<f64>> {
    let domain = cfg.family.domain();
    let init = eval_init(draws, grids);
    match grids.len() {
        1 => pde::solve_heat_1d(
            draws.diffusivity,
            &domain,
            grids[0].len(),
            nt,
            &init,
            &draws.forcing,
        ),
        _ => pde::solve_heat_2d(
            draws.diffusivity,
            &domain,
            grids[0].len(),
            grids[1].len(),
            nt,
            &init,
            &draws.forcing,
        ),
    }
}

/// Generate one record from its index substream.
pub fn generate_sample(cfg: &DatasetConfig, index: usize) -> Result<SampleRecord> {
    let mut rng = CounterRng::new(cfg.seed).substream(index as u64);
    let domain = cfg.family.domain();
    let draws = draw_sample(cfg, &mut rng);

    match cfg.family.layout() {
        Layout::Spacetime => {
            let s = cfg.sensor_count();
            let m = cfg.hr_frames * cfg.hr_spatial[0];
            let sensors = sample::sample_locations(&mut rng, s, cfg.lr_frames, &domain)?;
            let queries = sample::sample_locations(&mut rng, m, cfg.hr_frames, &domain)?;
            let (alpha, beta) = match draws.forcing {
                Forcing::Exp3 { alpha, beta } => (alpha, beta),
                _ => unreachable!("spacetime layout is the analytic family"),
            };
            // axis-major sensor coords: row 0 = t, row 1 = x
            let mut sensor_coords = Vec::with_capacity(2 * s);
            for i in 0..s {
                sensor_coords.push(sensors[2 * i]);
            }
            for i in 0..s {
                sensor_coords.push(sensors[2 * i + 1]);
            }
            let lr_field: Vec<f64> = (0..s)
                .map(|i| pde::exact_solution_exp3(alpha, beta, sensors[2 * i + 1], sensors[2 * i]))
                .collect();
            let hr_targets: Vec<f64> = (0..m)
                .map(|i| pde::exact_solution_exp3(alpha, beta, queries[2 * i + 1], queries[2 * i]))
                .collect();
            Ok(SampleRecord {
                params: narrow(&draws.params),
                sensor_coords: narrow(&sensor_coords),
                lr_field: narrow(&lr_field),
                query_coords: narrow(&queries),
                hr_targets: narrow(&hr_targets),
            })
        }
        Layout::Temporal => {
            let hr_grids: Vec<Vec<f64>> = domain
                .space
                .iter()
                .zip(&cfg.hr_spatial)
                .map(|(&(lo, hi), &n)| pde::linspace(lo, hi, n))
                .collect();
            let hr_field = solve_on(cfg, &draws, &hr_grids, cfg.hr_frames)?;
            let (lr_node_grids, _) = lr_grids(cfg);
            let mut lr_field = match cfg.lr_mode {
                LrMode::CoarseSolve => solve_on(cfg, &draws, &lr_node_grids, cfg.lr_frames)?,
                LrMode::Downsample => {
                    let mut hr_shape = vec![cfg.hr_frames];
                    hr_shape.extend_from_slice(&cfg.hr_spatial);
                    let mut lr_shape = vec![cfg.lr_frames];
                    lr_shape.extend_from_slice(&cfg.lr_spatial);
                    downsample_field(&hr_field, &hr_shape, &lr_shape)?
                }
            };
            if let Some(f) = cfg.partial_frames {
                lr_field.truncate(f * cfg.sensor_count());
            }
            Ok(SampleRecord {
                params: narrow(&draws.params),
                sensor_coords: narrow(&grid_sensor_coords(&lr_node_grids)),
                lr_field: narrow(&lr_field),
                query_coords: narrow(&grid_query_coords(&hr_grids)),
                hr_targets: narrow(&hr_field),
            })
        }
    }
}

/// The header a config produces.
pub fn header_for(cfg: &DatasetConfig) -> DatasetHeader {
    let domain = cfg.family.domain();
    let layout = cfg.family.layout();
    let s = cfg.sensor_count();
    let (lr_shape, hr_query_count, hr_shape) = match layout {
        Layout::Temporal => {
            let t = cfg.partial_frames.unwrap_or(cfg.lr_frames);
            let mut lr = vec![t];
            lr.extend_from_slice(&cfg.lr_spatial);
            let m: usize = cfg.hr_spatial.iter().product();
            let mut hr = vec![cfg.hr_frames];
            hr.extend_from_slice(&cfg.hr_spatial);
            (lr, m, Some(hr))
        }
        Layout::Spacetime => (vec![s], cfg.hr_frames * cfg.hr_spatial[0], None),
    };
    let lr_t_range = match (layout, cfg.partial_frames) {
        (Layout::Temporal, Some(f)) => {
            let times = pde::linspace(domain.time.0, domain.time.1, cfg.lr_frames);
            (domain.time.0, times[f - 1])
        }
        _ => domain.time,
    };
    DatasetHeader {
        family: cfg.family,
        layout,
        n_samples: cfg.n_samples,
        s,
        lr_shape,
        hr_query_count,
        hr_shape,
        lr_t_range,
        d: domain.dim(),
        param_names: cfg.family.param_names(),
        seed: cfg.seed,
    }
}

/// Build every record of a dataset; pure in the config.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let header = header_for(cfg);
    let mut records = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let rec = generate_sample(cfg, i)?;
        validate_record(&header, &rec, i)?;
        records.push(rec);
    }
    Ok(Dataset { header, records })
}

/// Check one record against the header contract: exact lengths, finite
/// values, and coordinates inside the declared domain (with a small
/// tolerance for 32-bit rounding).
pub fn validate_record(header: &DatasetHeader, rec: &SampleRecord, index: usize) -> Result<()> {
    let checks: [(&str, usize, usize); 5] = [
        ("params", rec.params.len(), header.param_names.len()),
        ("sensor_coords", rec.sensor_coords.len(), header.sensor_len()),
        ("lr_field", rec.lr_field.len(), header.lr_len()),
        ("query_coords", rec.query_coords.len(), header.query_len()),
        ("hr_targets", rec.hr_targets.len(), header.target_len()),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(Error::Contract(alloc::format!(
                "sample {index}: {name} has {got} values, header implies {want}"
            )));
        }
    }
    for (name, values) in [
        ("params", &rec.params),
        ("sensor_coords", &rec.sensor_coords),
        ("lr_field", &rec.lr_field),
        ("query_coords", &rec.query_coords),
        ("hr_targets", &rec.hr_targets),
    ] {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(alloc::format!(
                "sample {index}: {name} contains non-finite values"
            )));
        }
    }
    let domain = header.family.domain();
    let mut axes: Vec<(f64, f64)> = Vec::with_capacity(header.coord_dim());
    if header.layout == Layout::Spacetime {
        axes.push(domain.time);
    }
    axes.extend_from_slice(&domain.space);
    let in_axis = |v: f64, (lo, hi): (f64, f64)| {
        let slack = 1e-4 * (hi - lo);
        v >= lo - slack && v <= hi + slack
    };
    // sensor coords are axis-major
    for (a, &axis) in axes.iter().enumerate() {
        for i in 0..header.s {
            let v = rec.sensor_coords[a * header.s + i] as f64;
            if !in_axis(v, axis) {
                return Err(Error::Contract(alloc::format!(
                    "sample {index}: sensor coordinate {v} outside axis {a}"
                )));
            }
        }
    }
    // query coords are row-major
    let cd = header.coord_dim();
    for q in 0..header.hr_query_count {
        for (a, &axis) in axes.iter().enumerate() {
            let v = rec.query_coords[q * cd + a] as f64;
            if !in_axis(v, axis) {
                return Err(Error::Contract(alloc::format!(
                    "sample {index}: query coordinate {v} outside axis {a}"
                )));
            }
        }
    }
    Ok(())
}
