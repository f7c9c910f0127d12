//! The operator network: branch, sensor, and trunk subnetworks, the
//! architecture variants, and both combination forms.
//!
//! Every forward exists twice: a plain `f64` path for inference and a
//! graph path for training. Both follow identical accumulation orders,
//! so their outputs are bit-identical; a test enforces this.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{DatasetHeader, Layout, SampleRecord};
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{Graph, LstmWeights, TensorId};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Tanh,
    Relu,
    Sin,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(x),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sin => math::sin(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sin => "sin",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "sin" => Activation::Sin,
            other => {
                return Err(Error::Config(alloc::format!(
                    "unknown activation '{other}' (expected tanh, relu, sin)"
                )))
            }
        })
    }

    fn graph(&self, g: &mut Graph, x: TensorId) -> TensorId {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::Sin => g.sin(x),
        }
    }
}

/// Architecture variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    /// Branch, sensor, and trunk networks.
    ThreeNet,
    /// Branch and trunk only; the sensor factor is identically one.
    TwoNet,
    /// Sensor coordinates stacked onto the input values before a common
    /// branch network (scattered layouts).
    Stack,
    /// Componentwise query-minus-sensor offsets fed to a common trunk
    /// network (scattered layouts).
    Distance,
    /// Branch sees only the initial HR frame (gridded layouts).
    InitStateOnly,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::ThreeNet => "three_net",
            Variant::TwoNet => "two_net",
            Variant::Stack => "stack",
            Variant::Distance => "distance",
            Variant::InitStateOnly => "init_state_only",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "three_net" => Variant::ThreeNet,
            "two_net" => Variant::TwoNet,
            "stack" => Variant::Stack,
            "distance" => Variant::Distance,
            "init_state_only" => Variant::InitStateOnly,
            other => {
                return Err(Error::Config(alloc::format!(
                    "unknown variant '{other}' (expected three_net, two_net, stack, distance, init_state_only)"
                )))
            }
        })
    }

    fn has_sensor_net(&self) -> bool {
        matches!(self, Variant::ThreeNet)
    }
}

/// Branch subnetwork pipeline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum BranchKind {
    /// Flatten the input and run an MLP.
    Mlp { hidden: Vec<usize> },
    /// Optional frame upscaling, an LSTM across frames, then a shared
    /// per-frame MLP head (gridded layouts).
    LstmMlp {
        state: usize,
        head_hidden: Vec<usize>,
        time_upscale: bool,
    },
    /// As above with a per-frame convolutional encoder in front (2D).
    CnnLstmMlp {
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        state: usize,
        head_hidden: Vec<usize>,
        time_upscale: bool,
    },
}

impl BranchKind {
    fn time_upscale(&self) -> bool {
        match self {
            BranchKind::Mlp { .. } => false,
            BranchKind::LstmMlp { time_upscale, .. } => *time_upscale,
            BranchKind::CnnLstmMlp { time_upscale, .. } => *time_upscale,
        }
    }
}

/// Full architecture description.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub layout: Layout,
    pub variant: Variant,
    /// Latent width K shared by all subnetworks.
    pub latent: usize,
    pub spatial_dim: usize,
    /// Sensor count s.
    pub sensor_count: usize,
    /// LR frame count T (1 for scattered layouts).
    pub lr_frames: usize,
    /// LR nodes per spatial axis (gridded layouts).
    pub lr_spatial: Vec<usize>,
    /// Output frame count T+ (1 for scattered layouts).
    pub hr_frames: usize,
    /// Branch input size for the initial-state variant.
    pub init_size: usize,
    pub branch: BranchKind,
    pub sensor_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    pub activation: Activation,
    /// Per-axis normalization ranges in coordinate order
    /// (time first for spacetime layouts).
    pub coord_ranges: Vec<(f64, f64)>,
    /// Fraction of the output window the LR frames cover; below 1 the
    /// upscaled branch input holds the last frame past the window end.
    #[cfg_attr(feature = "serde", serde(default = "full_window"))]
    pub lr_window: f64,
}

fn full_window() -> f64 {
    1.0
}

impl ModelSpec {
    /// Coordinate columns per query row.
    pub fn coord_dim(&self) -> usize {
        match self.layout {
            Layout::Temporal => self.spatial_dim,
            Layout::Spacetime => self.spatial_dim + 1,
        }
    }

    /// Branch/sensor output rows: T+ for gridded layouts, 1 for scattered.
    pub fn rows(&self) -> usize {
        match self.layout {
            Layout::Temporal => self.hr_frames,
            Layout::Spacetime => 1,
        }
    }

    fn space_len(&self) -> usize {
        self.lr_spatial.iter().product()
    }

    /// Frame count entering the LSTM (after optional upscaling).
    fn frames_after_upscale(&self) -> usize {
        if self.branch.time_upscale() {
            self.hr_frames
        } else {
            self.lr_frames
        }
    }

    fn conv_out(&self) -> Result<(usize, usize, usize)> {
        match &self.branch {
            BranchKind::CnnLstmMlp {
                channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let (h, w) = (self.lr_spatial[0], self.lr_spatial[1]);
                if h + 2 * padding < *kernel || w + 2 * padding < *kernel {
                    return Err(Error::Config("conv kernel exceeds padded input".into()));
                }
                let ho = (h + 2 * padding - kernel) / stride + 1;
                let wo = (w + 2 * padding - kernel) / stride + 1;
                Ok((*channels, ho, wo))
            }
            _ => Err(Error::Config("branch has no conv stage".into())),
        }
    }

    /// Flattened branch input width.
    fn branch_input_len(&self) -> usize {
        match self.layout {
            Layout::Spacetime => match self.variant {
                Variant::Stack => (self.coord_dim() + 1) * self.sensor_count,
                _ => self.sensor_count,
            },
            Layout::Temporal => match self.variant {
                Variant::InitStateOnly => self.init_size,
                _ => self.frames_after_upscale() * self.space_len(),
            },
        }
    }

    fn sensor_input_len(&self) -> usize {
        self.coord_dim() * self.sensor_count
    }

    fn trunk_input_len(&self) -> usize {
        match self.variant {
            Variant::Distance => self.coord_dim() * self.sensor_count,
            _ => self.coord_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 {
            return Err(Error::Config("latent width must be positive".into()));
        }
        if self.sensor_count == 0 {
            return Err(Error::Config("sensor count must be positive".into()));
        }
        if !(1..=2).contains(&self.spatial_dim) {
            return Err(Error::Config("spatial dimension must be 1 or 2".into()));
        }
        if self.coord_ranges.len() != self.coord_dim() {
            return Err(Error::Config(alloc::format!(
                "expected {} coordinate ranges, got {}",
                self.coord_dim(),
                self.coord_ranges.len()
            )));
        }
        for &(lo, hi) in &self.coord_ranges {
            if !(lo < hi) {
                return Err(Error::Config("coordinate ranges must be increasing".into()));
            }
        }
        if !(self.lr_window > 0.0 && self.lr_window <= 1.0) {
            return Err(Error::Config(alloc::format!(
                "LR window fraction {} must lie in (0, 1]",
                self.lr_window
            )));
        }
        let widths: Vec<usize> = match &self.branch {
            BranchKind::Mlp { hidden } => hidden.clone(),
            BranchKind::LstmMlp {
                state, head_hidden, ..
            } => {
                let mut v = vec![*state];
                v.extend_from_slice(head_hidden);
                v
            }
            BranchKind::CnnLstmMlp {
                channels,
                kernel,
                stride,
                state,
                head_hidden,
                ..
            } => {
                let mut v = vec![*channels, *kernel, *stride, *state];
                v.extend_from_slice(head_hidden);
                v
            }
        };
        if widths
            .iter()
            .chain(&self.sensor_hidden)
            .chain(&self.trunk_hidden)
            .any(|&w| w == 0)
        {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        match self.layout {
            Layout::Spacetime => {
                if !matches!(self.branch, BranchKind::Mlp { .. }) {
                    return Err(Error::Config(
                        "scattered layouts use an MLP branch (no frame axis)".into(),
                    ));
                }
                if self.variant == Variant::InitStateOnly {
                    return Err(Error::Config(
                        "the initial-state variant needs a gridded layout".into(),
                    ));
                }
            }
            Layout::Temporal => {
                if matches!(self.variant, Variant::Stack | Variant::Distance) {
                    return Err(Error::Config(
                        "stack and distance variants apply to scattered layouts".into(),
                    ));
                }
                if self.lr_spatial.len() != self.spatial_dim
                    || self.space_len() != self.sensor_count
                {
                    return Err(Error::Config(
                        "LR grid extents must multiply to the sensor count".into(),
                    ));
                }
                if self.hr_frames < 1 || self.lr_frames < 1 {
                    return Err(Error::Config("frame counts must be positive".into()));
                }
                if self.variant == Variant::InitStateOnly {
                    if self.init_size == 0 {
                        return Err(Error::Config(
                            "initial-state variant needs a positive input size".into(),
                        ));
                    }
                    if !matches!(self.branch, BranchKind::Mlp { .. }) {
                        return Err(Error::Config(
                            "initial-state variant uses an MLP branch".into(),
                        ));
                    }
                } else {
                    match &self.branch {
                        BranchKind::Mlp { .. } => {}
                        BranchKind::LstmMlp { time_upscale, .. }
                        | BranchKind::CnnLstmMlp { time_upscale, .. } => {
                            if *time_upscale {
                                if self.lr_frames < 2 || self.hr_frames < self.lr_frames {
                                    return Err(Error::Config(
                                        "frame upscaling needs T >= 2 and T+ >= T".into(),
                                    ));
                                }
                            } else if self.lr_frames != self.hr_frames {
                                return Err(Error::Config(
                                    "without frame upscaling the LSTM needs T == T+".into(),
                                ));
                            }
                        }
                    }
                    if let BranchKind::CnnLstmMlp { .. } = &self.branch {
                        if self.spatial_dim != 2 {
                            return Err(Error::Config("the conv encoder needs 2 spatial axes".into()));
                        }
                        let (_, ho, wo) = self.conv_out()?;
                        if ho == 0 || wo == 0 {
                            return Err(Error::Config("conv output has zero extent".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Paper-defaults architecture for a dataset.
    pub fn for_dataset(header: &DatasetHeader, variant: Variant) -> Result<ModelSpec> {
        let domain = header.family.domain();
        let mut coord_ranges = Vec::new();
        if header.layout == Layout::Spacetime {
            coord_ranges.push(domain.time);
        }
        coord_ranges.extend_from_slice(&domain.space);
        let (lr_frames, lr_spatial) = match header.layout {
            Layout::Temporal => (header.lr_shape[0], header.lr_shape[1..].to_vec()),
            Layout::Spacetime => (1, vec![header.s]),
        };
        let hr_frames = match header.layout {
            Layout::Temporal => header.hr_frames(),
            Layout::Spacetime => 1,
        };
        let lr_window = match header.layout {
            Layout::Temporal => {
                (header.lr_t_range.1 - header.lr_t_range.0) / (domain.time.1 - domain.time.0)
            }
            Layout::Spacetime => 1.0,
        };
        let upscale = lr_frames != hr_frames || lr_window < 1.0;
        let branch = match (header.layout, variant) {
            (Layout::Spacetime, _) | (_, Variant::InitStateOnly) => BranchKind::Mlp {
                hidden: vec![64, 64],
            },
            (Layout::Temporal, _) if header.d == 1 => BranchKind::LstmMlp {
                state: 64,
                head_hidden: vec![64],
                time_upscale: upscale,
            },
            (Layout::Temporal, _) => BranchKind::CnnLstmMlp {
                channels: 4,
                kernel: 3,
                stride: 2,
                padding: 1,
                state: 64,
                head_hidden: vec![64],
                time_upscale: upscale,
            },
        };
        let spec = ModelSpec {
            layout: header.layout,
            variant,
            latent: 64,
            spatial_dim: header.d,
            sensor_count: header.s,
            lr_frames,
            lr_spatial,
            hr_frames,
            init_size: header.hr_query_count,
            branch,
            sensor_hidden: vec![64, 64],
            trunk_hidden: vec![64, 64],
            activation: Activation::Tanh,
            coord_ranges,
            lr_window,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Named parameter tensors in canonical order: branch, sensor, trunk,
/// combination bias.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub values: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.index(name)
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| Error::Contract(alloc::format!("missing parameter tensor '{name}'")))
    }

    pub fn total_len(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: f64 = self
            .values
            .iter()
            .flat_map(|v| v.iter())
            .map(|&x| x * x)
            .sum();
        math::sqrt(sq)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// FNV-1a over the little-endian bytes of every value in order.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.values.iter().flat_map(|t| t.iter()) {
            for byte in v.to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        hash
    }
}

/// Layer `(out, in)` pairs of an MLP.
fn mlp_dims(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input;
    for &h in hidden {
        dims.push((h, prev));
        prev = h;
    }
    dims.push((output, prev));
    dims
}

struct TensorSpec {
    name: String,
    shape: Vec<usize>,
}

fn mlp_tensors(prefix: &str, input: usize, hidden: &[usize], output: usize) -> Vec<TensorSpec> {
    let mut out = Vec::new();
    for (i, (o, n)) in mlp_dims(input, hidden, output).into_iter().enumerate() {
        out.push(TensorSpec {
            name: alloc::format!("{prefix}.{i}.w"),
            shape: vec![o, n],
        });
        out.push(TensorSpec {
            name: alloc::format!("{prefix}.{i}.b"),
            shape: vec![o],
        });
    }
    out
}

/// The parameter tensors a spec implies, in canonical order.
fn param_layout(spec: &ModelSpec) -> Result<Vec<TensorSpec>> {
    spec.validate()?;
    let k = spec.latent;
    let rows = spec.rows();
    let mut tensors = Vec::new();
    match &spec.branch {
        BranchKind::Mlp { hidden } => {
            tensors.extend(mlp_tensors(
                "branch",
                spec.branch_input_len(),
                hidden,
                rows * k,
            ));
        }
        BranchKind::LstmMlp {
            state, head_hidden, ..
        } => {
            let input = spec.space_len();
            tensors.push(TensorSpec {
                name: "branch.lstm.w_ih".into(),
                shape: vec![4 * state, input],
            });
            tensors.push(TensorSpec {
                name: "branch.lstm.w_hh".into(),
                shape: vec![4 * state, *state],
            });
            tensors.push(TensorSpec {
                name: "branch.lstm.b".into(),
                shape: vec![4 * state],
            });
            tensors.extend(mlp_tensors("branch.head", *state, head_hidden, k));
        }
        BranchKind::CnnLstmMlp {
            channels,
            kernel,
            state,
            head_hidden,
            ..
        } => {
            tensors.push(TensorSpec {
                name: "branch.conv.k".into(),
                shape: vec![*channels, 1, *kernel, *kernel],
            });
            tensors.push(TensorSpec {
                name: "branch.conv.b".into(),
                shape: vec![*channels],
            });
            let (co, ho, wo) = spec.conv_out()?;
            let input = co * ho * wo;
            tensors.push(TensorSpec {
                name: "branch.lstm.w_ih".into(),
                shape: vec![4 * state, input],
            });
            tensors.push(TensorSpec {
                name: "branch.lstm.w_hh".into(),
                shape: vec![4 * state, *state],
            });
            tensors.push(TensorSpec {
                name: "branch.lstm.b".into(),
                shape: vec![4 * state],
            });
            tensors.extend(mlp_tensors("branch.head", *state, head_hidden, k));
        }
    }
    if spec.variant.has_sensor_net() {
        tensors.extend(mlp_tensors(
            "sensor",
            spec.sensor_input_len(),
            &spec.sensor_hidden,
            rows * k,
        ));
    }
    tensors.extend(mlp_tensors(
        "trunk",
        spec.trunk_input_len(),
        &spec.trunk_hidden,
        k,
    ));
    tensors.push(TensorSpec {
        name: "comb.bias".into(),
        shape: vec![1],
    });
    Ok(tensors)
}

/// Uniform parameter initialization: weight tensors drawn from
/// U(-r, r) with r = sqrt(6 / (fan_in + fan_out)); all biases zero.
/// Draws happen tensor by tensor in canonical order (biases draw
/// nothing), so the result is a pure function of spec and seed.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    let layout = param_layout(spec)?;
    let mut rng = crate::rng::CounterRng::new(seed);
    let mut names = Vec::with_capacity(layout.len());
    let mut shapes = Vec::with_capacity(layout.len());
    let mut values = Vec::with_capacity(layout.len());
    for t in layout {
        let numel: usize = t.shape.iter().product();
        let is_bias = t.shape.len() == 1;
        let data = if is_bias {
            vec![0.0; numel]
        } else {
            let (fan_in, fan_out) = if t.shape.len() == 4 {
                let rf = t.shape[2] * t.shape[3];
                (t.shape[1] * rf, t.shape[0] * rf)
            } else {
                (t.shape[1], t.shape[0])
            };
            let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
            rng.uniform_vec(numel, -bound, bound)
        };
        names.push(t.name);
        shapes.push(t.shape);
        values.push(data);
    }
    Ok(ModelParams {
        names,
        shapes,
        values,
    })
}

/// Piecewise-linear resampling of `[t x width]` frames onto `t_plus`
/// uniformly spaced output frames. The inputs cover the leading `window`
/// fraction of the output span (1 = the whole span); output frames past
/// the window end hold the last input frame.
pub fn time_upscale(
    field: &[f64],
    t: usize,
    width: usize,
    t_plus: usize,
    window: f64,
) -> Result<Vec<f64>> {
    if field.len() != t * width || t < 2 {
        return Err(Error::Dimension {
            op: "time_upscale",
            lhs: vec![field.len()],
            rhs: vec![t, width],
        });
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Config(alloc::format!(
            "upscale window fraction {window} must lie in (0, 1]"
        )));
    }
    if t_plus < t {
        return Err(Error::Config(alloc::format!(
            "time upscaling cannot reduce frames ({t} to {t_plus})"
        )));
    }
    if t_plus == t && window == 1.0 {
        return Ok(field.to_vec());
    }
    let last = (t - 1) as f64;
    let mut out = Vec::with_capacity(t_plus * width);
    for i in 0..t_plus {
        let pos = if window == 1.0 {
            i as f64 * last / (t_plus - 1) as f64
        } else {
            (i as f64 / (t_plus - 1) as f64 / window * last).min(last)
        };
        let i0 = math::floor(pos) as usize;
        let i0 = i0.min(t - 1);
        let i1 = (i0 + 1).min(t - 1);
        let frac = pos - i0 as f64;
        for j in 0..width {
            out.push((1.0 - frac) * field[i0 * width + j] + frac * field[i1 * width + j]);
        }
    }
    Ok(out)
}

/// Per-sample inputs in `f64`, extracted from a stored record.
#[derive(Debug, Clone)]
pub struct SampleInputs {
    pub lr_field: Vec<f64>,
    /// Axis-major raw sensor coordinates.
    pub sensor_coords: Vec<f64>,
    /// First HR frame (gridded layouts), for the initial-state variant.
    pub hr_initial: Option<Vec<f64>>,
    /// Row-major raw query coordinates.
    pub queries: Vec<f64>,
    pub targets: Vec<f64>,
}

impl SampleInputs {
    pub fn from_record(header: &DatasetHeader, rec: &SampleRecord) -> Self {
        let hr_initial = match header.layout {
            Layout::Temporal => Some(
                rec.hr_targets[..header.hr_query_count]
                    .iter()
                    .map(|&v| v as f64)
                    .collect(),
            ),
            Layout::Spacetime => None,
        };
        SampleInputs {
            lr_field: rec.lr_f64(),
            sensor_coords: rec.sensor_f64(),
            hr_initial,
            queries: rec.query_f64(),
            targets: rec.targets_f64(),
        }
    }
}

fn normalize(v: f64, (lo, hi): (f64, f64)) -> f64 {
    2.0 * (v - lo) / (hi - lo) - 1.0
}

/// Axis-major sensor coordinates normalized per axis.
fn normalized_sensors(spec: &ModelSpec, sensor_coords: &[f64]) -> Vec<f64> {
    let s = spec.sensor_count;
    let mut out = Vec::with_capacity(sensor_coords.len());
    for (a, &range) in spec.coord_ranges.iter().enumerate() {
        for i in 0..s {
            out.push(normalize(sensor_coords[a * s + i], range));
        }
    }
    out
}

/// Trunk feature rows for a batch of raw queries.
fn trunk_features(spec: &ModelSpec, sensor_coords: &[f64], queries: &[f64]) -> Vec<f64> {
    let cd = spec.coord_dim();
    let m = queries.len() / cd;
    match spec.variant {
        Variant::Distance => {
            let s = spec.sensor_count;
            let norm_sens = normalized_sensors(spec, sensor_coords);
            let mut out = Vec::with_capacity(m * cd * s);
            for q in 0..m {
                for i in 0..s {
                    for (a, &range) in spec.coord_ranges.iter().enumerate() {
                        let y = normalize(queries[q * cd + a], range);
                        out.push(y - norm_sens[a * s + i]);
                    }
                }
            }
            out
        }
        _ => {
            let mut out = Vec::with_capacity(queries.len());
            for q in 0..m {
                for (a, &range) in spec.coord_ranges.iter().enumerate() {
                    out.push(normalize(queries[q * cd + a], range));
                }
            }
            out
        }
    }
}

/// Flattened branch input for a sample, after variant preprocessing and
/// optional frame upscaling. Shared by the plain and graph paths.
fn branch_input(spec: &ModelSpec, inputs: &SampleInputs) -> Result<Vec<f64>> {
    match spec.layout {
        Layout::Spacetime => match spec.variant {
            Variant::Stack => {
                // normalized coordinate rows, then the value row
                let mut stacked = normalized_sensors(spec, &inputs.sensor_coords);
                stacked.extend_from_slice(&inputs.lr_field);
                Ok(stacked)
            }
            _ => Ok(inputs.lr_field.clone()),
        },
        Layout::Temporal => match spec.variant {
            Variant::InitStateOnly => inputs
                .hr_initial
                .clone()
                .ok_or_else(|| Error::Contract("initial-state variant needs the first HR frame".into())),
            _ => {
                if spec.branch.time_upscale() {
                    time_upscale(
                        &inputs.lr_field,
                        spec.lr_frames,
                        spec.space_len(),
                        spec.hr_frames,
                        spec.lr_window,
                    )
                } else {
                    Ok(inputs.lr_field.clone())
                }
            }
        },
    }
}

// ---------------------------------------------------------------------
// plain forward path
// ---------------------------------------------------------------------

/// One affine layer, bias-first accumulation (mirrors the graph op).
fn affine_plain(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let nout = b.len();
    let nin = x.len();
    let mut out = Vec::with_capacity(nout);
    for o in 0..nout {
        let wrow = &w[o * nin..(o + 1) * nin];
        let mut acc = b[o];
        for i in 0..nin {
            acc += x[i] * wrow[i];
        }
        out.push(acc);
    }
    out
}

/// MLP forward on one vector: hidden activations, linear final layer.
fn mlp_plain(
    params: &ModelParams,
    prefix: &str,
    n_layers: usize,
    act: Activation,
    input: &[f64],
) -> Result<Vec<f64>> {
    let mut x = input.to_vec();
    for l in 0..n_layers {
        let w = params.get(&alloc::format!("{prefix}.{l}.w"))?;
        let b = params.get(&alloc::format!("{prefix}.{l}.b"))?;
        x = affine_plain(w, b, &x);
        if l + 1 < n_layers {
            for v in &mut x {
                *v = act.apply(*v);
            }
        }
    }
    Ok(x)
}

/// Zero-initialized LSTM scan returning the hidden state after each frame.
fn lstm_plain(
    w_ih: &[f64],
    w_hh: &[f64],
    b: &[f64],
    hidden: usize,
    frames: &[f64],
    width: usize,
) -> Vec<f64> {
    let t = frames.len() / width;
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = Vec::with_capacity(t * hidden);
    for f in 0..t {
        let x = &frames[f * width..(f + 1) * width];
        let mut pre = vec![0.0; 4 * hidden];
        for g in 0..4 * hidden {
            let row = &w_ih[g * width..(g + 1) * width];
            let mut acc = 0.0;
            for j in 0..width {
                acc += row[j] * x[j];
            }
            let rrow = &w_hh[g * hidden..(g + 1) * hidden];
            let mut acc_h = 0.0;
            for j in 0..hidden {
                acc_h += rrow[j] * h[j];
            }
            pre[g] = (acc + acc_h) + b[g];
        }
        for j in 0..hidden {
            let i_g = math::sigmoid(pre[j]);
            let f_g = math::sigmoid(pre[hidden + j]);
            let g_g = math::tanh(pre[2 * hidden + j]);
            let o_g = math::sigmoid(pre[3 * hidden + j]);
            c[j] = f_g * c[j] + i_g * g_g;
            h[j] = o_g * math::tanh(c[j]);
        }
        out.extend_from_slice(&h);
    }
    out
}

/// Per-frame conv encoder (single input channel), mirroring the graph op's
/// loop order exactly.
fn conv_plain(
    x: &[f64],
    h: usize,
    w: usize,
    k: &[f64],
    b: &[f64],
    co: usize,
    ks: usize,
    stride: usize,
    padding: usize,
) -> Vec<f64> {
    let ho = (h + 2 * padding - ks) / stride + 1;
    let wo = (w + 2 * padding - ks) / stride + 1;
    let mut out = vec![0.0; co * ho * wo];
    for oc in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = b[oc];
                for ky in 0..ks {
                    let iy = oy * stride + ky;
                    if iy < padding || iy - padding >= h {
                        continue;
                    }
                    let iy = iy - padding;
                    for kx in 0..ks {
                        let ix = ox * stride + kx;
                        if ix < padding || ix - padding >= w {
                            continue;
                        }
                        let ix = ix - padding;
                        acc += x[iy * w + ix] * k[(oc * ks + ky) * ks + kx];
                    }
                }
                out[(oc * ho + oy) * wo + ox] = acc;
            }
        }
    }
    out
}

/// Branch rows `[rows x K]` on the plain path.
fn branch_rows_plain(
    spec: &ModelSpec,
    params: &ModelParams,
    inputs: &SampleInputs,
) -> Result<Vec<f64>> {
    let input = branch_input(spec, inputs)?;
    match &spec.branch {
        BranchKind::Mlp { hidden } => mlp_plain(params, "branch", hidden.len() + 1, spec.activation, &input),
        BranchKind::LstmMlp {
            state, head_hidden, ..
        } => {
            let w_ih = params.get("branch.lstm.w_ih")?;
            let w_hh = params.get("branch.lstm.w_hh")?;
            let b = params.get("branch.lstm.b")?;
            let width = spec.space_len();
            let hs = lstm_plain(w_ih, w_hh, b, *state, &input, width);
            let mut rows = Vec::with_capacity(spec.rows() * spec.latent);
            for f in 0..spec.frames_after_upscale() {
                let hrow = &hs[f * state..(f + 1) * state];
                rows.extend(mlp_plain(
                    params,
                    "branch.head",
                    head_hidden.len() + 1,
                    spec.activation,
                    hrow,
                )?);
            }
            Ok(rows)
        }
        BranchKind::CnnLstmMlp {
            channels,
            kernel,
            stride,
            padding,
            state,
            head_hidden,
            ..
        } => {
            let kern = params.get("branch.conv.k")?;
            let cb = params.get("branch.conv.b")?;
            let (h, w) = (spec.lr_spatial[0], spec.lr_spatial[1]);
            let t = spec.frames_after_upscale();
            let (co, ho, wo) = spec.conv_out()?;
            let enc_len = co * ho * wo;
            let mut encoded = Vec::with_capacity(t * enc_len);
            for f in 0..t {
                encoded.extend(conv_plain(
                    &input[f * h * w..(f + 1) * h * w],
                    h,
                    w,
                    kern,
                    cb,
                    *channels,
                    *kernel,
                    *stride,
                    *padding,
                ));
            }
            let w_ih = params.get("branch.lstm.w_ih")?;
            let w_hh = params.get("branch.lstm.w_hh")?;
            let b = params.get("branch.lstm.b")?;
            let hs = lstm_plain(w_ih, w_hh, b, *state, &encoded, enc_len);
            let mut rows = Vec::with_capacity(spec.rows() * spec.latent);
            for f in 0..t {
                let hrow = &hs[f * state..(f + 1) * state];
                rows.extend(mlp_plain(
                    params,
                    "branch.head",
                    head_hidden.len() + 1,
                    spec.activation,
                    hrow,
                )?);
            }
            Ok(rows)
        }
    }
}

/// Sensor rows `[rows x K]`: the sensor network's output, or ones when
/// the variant has no sensor network.
fn sensor_rows_plain(
    spec: &ModelSpec,
    params: &ModelParams,
    inputs: &SampleInputs,
) -> Result<Vec<f64>> {
    if spec.variant.has_sensor_net() {
        let flat = normalized_sensors(spec, &inputs.sensor_coords);
        mlp_plain(
            params,
            "sensor",
            spec.sensor_hidden.len() + 1,
            spec.activation,
            &flat,
        )
    } else {
        Ok(vec![1.0; spec.rows() * spec.latent])
    }
}

/// The latent factors of one evaluation.
#[derive(Debug, Clone)]
pub struct EvalParts {
    /// Branch rows `[rows x K]`.
    pub branch: Vec<f64>,
    /// Sensor rows `[rows x K]` (ones when the variant has no sensor net).
    pub sensor: Vec<f64>,
    /// Trunk rows `[M x K]`.
    pub trunk: Vec<f64>,
    pub bias: f64,
}

/// Run the subnetworks without combining them.
pub fn eval_parts(
    spec: &ModelSpec,
    params: &ModelParams,
    inputs: &SampleInputs,
    queries: &[f64],
) -> Result<EvalParts> {
    let cd = spec.coord_dim();
    if queries.len() % cd != 0 {
        return Err(Error::Dimension {
            op: "eval_parts",
            lhs: vec![queries.len()],
            rhs: vec![cd],
        });
    }
    let m = queries.len() / cd;
    let branch = branch_rows_plain(spec, params, inputs)?;
    let sensor = sensor_rows_plain(spec, params, inputs)?;
    let bias = params.get("comb.bias")?[0];
    let feats = trunk_features(spec, &inputs.sensor_coords, queries);
    let flen = spec.trunk_input_len();
    let n_layers = spec.trunk_hidden.len() + 1;
    let mut trunk = Vec::with_capacity(m * spec.latent);
    for q in 0..m {
        trunk.extend(mlp_plain(
            params,
            "trunk",
            n_layers,
            spec.activation,
            &feats[q * flen..(q + 1) * flen],
        )?);
    }
    Ok(EvalParts {
        branch,
        sensor,
        trunk,
        bias,
    })
}

/// The combination layer on explicit latent rows.
///
/// Scattered layouts contract one branch/sensor row against every trunk
/// row: `out_m = bias + sum_k t_mk * (b_k * s_k)`. Gridded layouts
/// contract per output frame: `out_im = bias + sum_k (B_ik * S_ik) * t_mk`.
/// Apart from the bias the output is linear in each of the three factors.
pub fn combine(
    layout: Layout,
    k: usize,
    branch: &[f64],
    sensor: &[f64],
    trunk: &[f64],
    bias: f64,
) -> Result<Vec<f64>> {
    if k == 0
        || branch.len() != sensor.len()
        || branch.is_empty()
        || branch.len() % k != 0
        || trunk.len() % k != 0
    {
        return Err(Error::Dimension {
            op: "combine",
            lhs: vec![branch.len(), sensor.len()],
            rhs: vec![trunk.len(), k],
        });
    }
    let rows = branch.len() / k;
    if layout == Layout::Spacetime && rows != 1 {
        return Err(Error::Dimension {
            op: "combine",
            lhs: vec![rows, k],
            rhs: vec![1, k],
        });
    }
    let m = trunk.len() / k;
    // BS product mirrors the graph's elementwise mul
    let bs: Vec<f64> = branch.iter().zip(sensor).map(|(&b, &s)| b * s).collect();
    let mut out = vec![0.0; rows * m];
    for q in 0..m {
        let tk = &trunk[q * k..(q + 1) * k];
        match layout {
            Layout::Spacetime => {
                let mut acc = 0.0;
                for j in 0..k {
                    acc += tk[j] * bs[j];
                }
                out[q] = acc + bias;
            }
            Layout::Temporal => {
                for i in 0..rows {
                    let row = &bs[i * k..(i + 1) * k];
                    let mut acc = 0.0;
                    for j in 0..k {
                        acc += row[j] * tk[j];
                    }
                    out[i * m + q] = acc + bias;
                }
            }
        }
    }
    Ok(out)
}

/// Evaluate the model at raw query rows.
///
/// Returns `[M]` for scattered layouts or row-major `[T+ x M]` for
/// gridded layouts.
pub fn sropnet_eval(
    spec: &ModelSpec,
    params: &ModelParams,
    inputs: &SampleInputs,
    queries: &[f64],
) -> Result<Vec<f64>> {
    let parts = eval_parts(spec, params, inputs, queries)?;
    combine(
        spec.layout,
        spec.latent,
        &parts.branch,
        &parts.sensor,
        &parts.trunk,
        parts.bias,
    )
}

// ---------------------------------------------------------------------
// graph forward path
// ---------------------------------------------------------------------

/// Parameter leaves on a graph, aligned with [`ModelParams`] order.
pub struct BoundParams {
    pub ids: Vec<TensorId>,
}

/// Create one gradient-tracked leaf per parameter tensor.
pub fn bind_params(g: &mut Graph, params: &ModelParams) -> Result<BoundParams> {
    let mut ids = Vec::with_capacity(params.values.len());
    for (v, s) in params.values.iter().zip(&params.shapes) {
        ids.push(g.leaf(v.clone(), s, true)?);
    }
    Ok(BoundParams { ids })
}

fn bound_id(params: &ModelParams, bound: &BoundParams, name: &str) -> Result<TensorId> {
    params
        .index(name)
        .map(|i| bound.ids[i])
        .ok_or_else(|| Error::Contract(alloc::format!("missing parameter tensor '{name}'")))
}

/// MLP on a `[m, in]` batch, hidden activations, linear final layer.
fn mlp_graph(
    g: &mut Graph,
    params: &ModelParams,
    bound: &BoundParams,
    prefix: &str,
    n_layers: usize,
    act: Activation,
    mut x: TensorId,
) -> Result<TensorId> {
    for l in 0..n_layers {
        let w = bound_id(params, bound, &alloc::format!("{prefix}.{l}.w"))?;
        let b = bound_id(params, bound, &alloc::format!("{prefix}.{l}.b"))?;
        x = g.linear(x, w, b)?;
        if l + 1 < n_layers {
            x = act.graph(g, x);
        }
    }
    Ok(x)
}

/// Branch rows `[rows, K]` on the graph path.
fn branch_rows_graph(
    g: &mut Graph,
    spec: &ModelSpec,
    params: &ModelParams,
    bound: &BoundParams,
    inputs: &SampleInputs,
) -> Result<TensorId> {
    let input = branch_input(spec, inputs)?;
    let k = spec.latent;
    match &spec.branch {
        BranchKind::Mlp { hidden } => {
            let len = input.len();
            let x = g.leaf(input, &[1, len], false)?;
            let out = mlp_graph(g, params, bound, "branch", hidden.len() + 1, spec.activation, x)?;
            g.reshape(out, &[spec.rows(), k])
        }
        BranchKind::LstmMlp {
            state, head_hidden, ..
        } => {
            let width = spec.space_len();
            let t = spec.frames_after_upscale();
            let weights = LstmWeights {
                w_ih: bound_id(params, bound, "branch.lstm.w_ih")?,
                w_hh: bound_id(params, bound, "branch.lstm.w_hh")?,
                b: bound_id(params, bound, "branch.lstm.b")?,
            };
            let mut h = g.leaf(vec![0.0; *state], &[*state], false)?;
            let mut c = g.leaf(vec![0.0; *state], &[*state], false)?;
            let mut h_rows = Vec::with_capacity(t);
            for f in 0..t {
                let x = g.leaf(input[f * width..(f + 1) * width].to_vec(), &[width], false)?;
                let (hn, cn) = g.lstm_step(x, h, c, weights)?;
                h = hn;
                c = cn;
                h_rows.push(h);
            }
            let stacked = g.stack_rows(&h_rows)?;
            mlp_graph(
                g,
                params,
                bound,
                "branch.head",
                head_hidden.len() + 1,
                spec.activation,
                stacked,
            )
        }
        BranchKind::CnnLstmMlp {
            kernel: _,
            stride,
            padding,
            state,
            head_hidden,
            ..
        } => {
            let (h_in, w_in) = (spec.lr_spatial[0], spec.lr_spatial[1]);
            let t = spec.frames_after_upscale();
            let kern = bound_id(params, bound, "branch.conv.k")?;
            let cb = bound_id(params, bound, "branch.conv.b")?;
            let (co, ho, wo) = spec.conv_out()?;
            let enc_len = co * ho * wo;
            let weights = LstmWeights {
                w_ih: bound_id(params, bound, "branch.lstm.w_ih")?,
                w_hh: bound_id(params, bound, "branch.lstm.w_hh")?,
                b: bound_id(params, bound, "branch.lstm.b")?,
            };
            let mut h = g.leaf(vec![0.0; *state], &[*state], false)?;
            let mut c = g.leaf(vec![0.0; *state], &[*state], false)?;
            let mut h_rows = Vec::with_capacity(t);
            for f in 0..t {
                let frame = g.leaf(
                    input[f * h_in * w_in..(f + 1) * h_in * w_in].to_vec(),
                    &[1, h_in, w_in],
                    false,
                )?;
                let enc = g.conv2d(frame, kern, cb, *stride, *padding)?;
                let flat = g.reshape(enc, &[enc_len])?;
                let (hn, cn) = g.lstm_step(flat, h, c, weights)?;
                h = hn;
                c = cn;
                h_rows.push(h);
            }
            let stacked = g.stack_rows(&h_rows)?;
            mlp_graph(
                g,
                params,
                bound,
                "branch.head",
                head_hidden.len() + 1,
                spec.activation,
                stacked,
            )
        }
    }
}

/// Sensor rows `[rows, K]` on the graph path (a constant of ones when the
/// variant has no sensor network).
fn sensor_rows_graph(
    g: &mut Graph,
    spec: &ModelSpec,
    params: &ModelParams,
    bound: &BoundParams,
    inputs: &SampleInputs,
) -> Result<TensorId> {
    let rows = spec.rows();
    let k = spec.latent;
    if spec.variant.has_sensor_net() {
        let flat = normalized_sensors(spec, &inputs.sensor_coords);
        let len = flat.len();
        let x = g.leaf(flat, &[1, len], false)?;
        let out = mlp_graph(
            g,
            params,
            bound,
            "sensor",
            spec.sensor_hidden.len() + 1,
            spec.activation,
            x,
        )?;
        g.reshape(out, &[rows, k])
    } else {
        g.leaf(vec![1.0; rows * k], &[rows, k], false)
    }
}

/// Graph-mode evaluation at raw query rows.
///
/// Returns the output tensor: `[M]` for scattered layouts, `[T+, M]` for
/// gridded layouts. Forward values are bit-identical to
/// [`sropnet_eval`]; a test enforces this.
pub fn graph_eval(
    g: &mut Graph,
    spec: &ModelSpec,
    params: &ModelParams,
    bound: &BoundParams,
    inputs: &SampleInputs,
    queries: &[f64],
) -> Result<TensorId> {
    let cd = spec.coord_dim();
    if queries.len() % cd != 0 || queries.is_empty() {
        return Err(Error::Dimension {
            op: "graph_eval",
            lhs: vec![queries.len()],
            rhs: vec![cd],
        });
    }
    let m = queries.len() / cd;
    let k = spec.latent;
    let b_rows = branch_rows_graph(g, spec, params, bound, inputs)?;
    let s_rows = sensor_rows_graph(g, spec, params, bound, inputs)?;
    let bias = bound_id(params, bound, "comb.bias")?;
    let feats = trunk_features(spec, &inputs.sensor_coords, queries);
    let flen = spec.trunk_input_len();
    let fx = g.leaf(feats, &[m, flen], false)?;
    let tq = mlp_graph(
        g,
        params,
        bound,
        "trunk",
        spec.trunk_hidden.len() + 1,
        spec.activation,
        fx,
    )?;
    let bs = g.mul(b_rows, s_rows)?;
    match spec.layout {
        Layout::Spacetime => {
            let bs_vec = g.reshape(bs, &[k])?;
            let mv = g.matvec(tq, bs_vec)?;
            g.add(mv, bias)
        }
        Layout::Temporal => {
            let tt = g.transpose(tq)?;
            let prod = g.matmul(bs, tt)?;
            g.add(prod, bias)
        }
    }
}
