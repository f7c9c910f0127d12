//! Run configuration files: sectioned JSON overriding built-in defaults.
//!
//! Every field is optional; anything absent falls back to the problem
//! family's defaults. Unknown keys are rejected so typos fail loudly.
//! Commands echo the fully resolved configuration into their output
//! directory, so a run is reproducible from the echo alone.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sropnet_core::dataset::{DatasetConfig, LrMode};
use sropnet_core::model::{Activation, BranchKind, ModelSpec};
use sropnet_core::train::{BaselineMethod, TrainConfig};

use crate::errors::{CliError, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Problem family name (exp1, exp2, exp3, diff2d, diff2d-var, forced2d).
    pub experiment: Option<String>,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    pub lr_frames: Option<usize>,
    pub lr_spatial: Option<Vec<usize>>,
    pub hr_frames: Option<usize>,
    pub hr_spatial: Option<Vec<usize>>,
    /// "coarse_solve" or "downsample".
    pub lr_mode: Option<String>,
    pub partial_frames: Option<usize>,
    pub alpha_range: Option<(f64, f64)>,
    pub beta_range: Option<(f64, f64)>,
    pub diffusivity_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// "three_net", "two_net", "stack", "distance", or "init_state_only".
    pub variant: Option<String>,
    pub latent: Option<usize>,
    /// "tanh", "relu", or "sin".
    pub activation: Option<String>,
    pub sensor_hidden: Option<Vec<usize>>,
    pub trunk_hidden: Option<Vec<usize>>,
    pub branch: BranchSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BranchSection {
    /// "mlp", "lstm_mlp", or "cnn_lstm_mlp".
    pub kind: Option<String>,
    pub hidden: Option<Vec<usize>>,
    pub state: Option<usize>,
    pub head_hidden: Option<Vec<usize>>,
    pub time_upscale: Option<bool>,
    pub channels: Option<usize>,
    pub kernel: Option<usize>,
    pub stride: Option<usize>,
    pub padding: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub lambda_data: Option<f64>,
    pub lambda_physics: Option<f64>,
    pub n_collocation: Option<usize>,
    pub fd_step: Option<f64>,
    pub split: Option<f64>,
    pub query_batch: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// "auto", "bicubic_grid", "idw_scattered", or "none".
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub dataset: Option<String>,
    pub out_dir: Option<String>,
    pub checkpoint: Option<String>,
    pub report: Option<String>,
}

pub fn load_runconfig(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!("{}: invalid run config: {e}", path.display()))
    })
}

pub fn parse_lr_mode(name: &str) -> Result<LrMode> {
    match name {
        "coarse_solve" => Ok(LrMode::CoarseSolve),
        "downsample" => Ok(LrMode::Downsample),
        other => Err(CliError::Usage(format!(
            "unknown LR mode {other:?} (expected coarse_solve or downsample)"
        ))),
    }
}

/// Baseline choice: `None` means "none", `auto` defers to the layout.
pub fn parse_baseline(name: &str) -> Result<Option<BaselineMethod>> {
    match name {
        "none" => Ok(None),
        "auto" => Err(CliError::Usage(
            "baseline \"auto\" must be resolved against a dataset first".into(),
        )),
        "bicubic_grid" => Ok(Some(BaselineMethod::BicubicGrid)),
        "idw_scattered" => Ok(Some(BaselineMethod::IdwScattered)),
        other => Err(CliError::Usage(format!(
            "unknown baseline {other:?} (expected auto, bicubic_grid, idw_scattered, or none)"
        ))),
    }
}

impl DataSection {
    /// Overlay onto a family-default dataset config.
    pub fn apply(&self, cfg: &mut DatasetConfig) -> Result<()> {
        if let Some(n) = self.n_samples {
            cfg.n_samples = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.lr_frames {
            cfg.lr_frames = f;
        }
        if let Some(v) = &self.lr_spatial {
            cfg.lr_spatial = v.clone();
        }
        if let Some(f) = self.hr_frames {
            cfg.hr_frames = f;
        }
        if let Some(v) = &self.hr_spatial {
            cfg.hr_spatial = v.clone();
        }
        if let Some(m) = &self.lr_mode {
            cfg.lr_mode = parse_lr_mode(m)?;
        }
        if let Some(f) = self.partial_frames {
            cfg.partial_frames = Some(f);
        }
        if let Some(r) = self.alpha_range {
            cfg.alpha_range = Some(r);
        }
        if let Some(r) = self.beta_range {
            cfg.beta_range = Some(r);
        }
        if let Some(r) = self.diffusivity_range {
            cfg.diffusivity_range = Some(r);
        }
        Ok(())
    }
}

impl BranchSection {
    fn any_field_set(&self) -> bool {
        self.kind.is_some()
            || self.hidden.is_some()
            || self.state.is_some()
            || self.head_hidden.is_some()
            || self.time_upscale.is_some()
            || self.channels.is_some()
            || self.kernel.is_some()
            || self.stride.is_some()
            || self.padding.is_some()
    }

    fn reject<T>(&self, field: &str, kind: &str) -> Result<T> {
        Err(CliError::Usage(format!(
            "branch.{field} does not apply to branch kind {kind:?}"
        )))
    }

    /// Overlay onto the spec's default branch; an explicit `kind` switches
    /// architectures and fills unset fields with defaults.
    pub fn apply(&self, current: &BranchKind, upscale_default: bool) -> Result<BranchKind> {
        if !self.any_field_set() {
            return Ok(current.clone());
        }
        let kind = match &self.kind {
            Some(k) => k.as_str(),
            None => match current {
                BranchKind::Mlp { .. } => "mlp",
                BranchKind::LstmMlp { .. } => "lstm_mlp",
                BranchKind::CnnLstmMlp { .. } => "cnn_lstm_mlp",
            },
        };
        match kind {
            "mlp" => {
                if self.state.is_some() || self.head_hidden.is_some() {
                    return self.reject("state/head_hidden", kind);
                }
                if self.time_upscale.is_some() {
                    return self.reject("time_upscale", kind);
                }
                if self.channels.is_some()
                    || self.kernel.is_some()
                    || self.stride.is_some()
                    || self.padding.is_some()
                {
                    return self.reject("channels/kernel/stride/padding", kind);
                }
                let fallback = match current {
                    BranchKind::Mlp { hidden } => hidden.clone(),
                    _ => vec![64, 64],
                };
                Ok(BranchKind::Mlp {
                    hidden: self.hidden.clone().unwrap_or(fallback),
                })
            }
            "lstm_mlp" => {
                if self.hidden.is_some() {
                    return self.reject("hidden", kind);
                }
                if self.channels.is_some()
                    || self.kernel.is_some()
                    || self.stride.is_some()
                    || self.padding.is_some()
                {
                    return self.reject("channels/kernel/stride/padding", kind);
                }
                let (state0, head0, up0) = match current {
                    BranchKind::LstmMlp {
                        state,
                        head_hidden,
                        time_upscale,
                    } => (*state, head_hidden.clone(), *time_upscale),
                    _ => (64, vec![64], upscale_default),
                };
                Ok(BranchKind::LstmMlp {
                    state: self.state.unwrap_or(state0),
                    head_hidden: self.head_hidden.clone().unwrap_or(head0),
                    time_upscale: self.time_upscale.unwrap_or(up0),
                })
            }
            "cnn_lstm_mlp" => {
                if self.hidden.is_some() {
                    return self.reject("hidden", kind);
                }
                let (ch0, k0, s0, p0, state0, head0, up0) = match current {
                    BranchKind::CnnLstmMlp {
                        channels,
                        kernel,
                        stride,
                        padding,
                        state,
                        head_hidden,
                        time_upscale,
                    } => (
                        *channels,
                        *kernel,
                        *stride,
                        *padding,
                        *state,
                        head_hidden.clone(),
                        *time_upscale,
                    ),
                    _ => (4, 3, 2, 1, 64, vec![64], upscale_default),
                };
                Ok(BranchKind::CnnLstmMlp {
                    channels: self.channels.unwrap_or(ch0),
                    kernel: self.kernel.unwrap_or(k0),
                    stride: self.stride.unwrap_or(s0),
                    padding: self.padding.unwrap_or(p0),
                    state: self.state.unwrap_or(state0),
                    head_hidden: self.head_hidden.clone().unwrap_or(head0),
                    time_upscale: self.time_upscale.unwrap_or(up0),
                })
            }
            other => Err(CliError::Usage(format!(
                "unknown branch kind {other:?} (expected mlp, lstm_mlp, or cnn_lstm_mlp)"
            ))),
        }
    }
}

impl ModelSection {
    /// Overlay onto a dataset-default model spec (the variant is resolved
    /// by the caller so a command-line flag can take precedence).
    pub fn apply(&self, spec: &mut ModelSpec) -> Result<()> {
        if let Some(k) = self.latent {
            spec.latent = k;
        }
        if let Some(a) = &self.activation {
            spec.activation = Activation::parse(a).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(v) = &self.sensor_hidden {
            spec.sensor_hidden = v.clone();
        }
        if let Some(v) = &self.trunk_hidden {
            spec.trunk_hidden = v.clone();
        }
        let upscale_default = spec.hr_frames != spec.lr_frames;
        spec.branch = self.branch.apply(&spec.branch, upscale_default)?;
        Ok(())
    }
}

impl TrainSection {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.adam.learning_rate = v;
        }
        if let Some(v) = self.beta1 {
            cfg.adam.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            cfg.adam.beta2 = v;
        }
        if let Some(v) = self.epsilon {
            cfg.adam.epsilon = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.lambda_data {
            cfg.lambda_data = v;
        }
        if let Some(v) = self.lambda_physics {
            cfg.lambda_physics = v;
        }
        if let Some(v) = self.n_collocation {
            cfg.n_collocation = v;
        }
        if let Some(v) = self.fd_step {
            cfg.fd_step = v;
        }
        if let Some(v) = self.split {
            cfg.split = v;
        }
        if let Some(v) = self.query_batch {
            cfg.query_batch = Some(v);
        }
    }
}

/// Write a resolved configuration echo as pretty JSON.
pub fn write_echo(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("config echo serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
