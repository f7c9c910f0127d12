//! The five subcommands: generate, train, evaluate, predict, plot.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde_json::json;
use sropnet_core::dataset::{
    generate_sample, header_for, Dataset, DatasetConfig, DatasetHeader, Family, Layout,
};
use sropnet_core::model::{init_params, sropnet_eval, ModelSpec, SampleInputs, Variant};
use sropnet_core::pde::linspace;
use sropnet_core::train::{
    baseline_interpolate, rel_l2, train, BaselineMethod, BaselineReport, EvalReport, TrainConfig,
};

use crate::errors::{CliError, Result};
use crate::runconfig::{load_runconfig, parse_baseline, write_echo, RunConfig};
use crate::{checkpoint, fieldfile, pgm, srop1, threads};

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn load_config_opt(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => load_runconfig(p),
        None => Ok(RunConfig::default()),
    }
}

/// Parse "lo,hi" into a range pair.
fn parse_range(text: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() == 2 {
        if let (Ok(lo), Ok(hi)) = (parts[0].trim().parse(), parts[1].trim().parse()) {
            return Ok((lo, hi));
        }
    }
    Err(CliError::Usage(format!(
        "{what} must be \"lo,hi\", got {text:?}"
    )))
}

/// Parse comma-separated positive integers.
fn parse_counts(text: &str, what: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        match part.trim().parse::<usize>() {
            Ok(n) if n > 0 => out.push(n),
            _ => {
                return Err(CliError::Usage(format!(
                    "{what} must be comma-separated positive integers, got {text:?}"
                )))
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Problem family: exp1, exp2, exp3, diff2d, diff2d-var, forced2d.
    #[arg(long)]
    pub problem: String,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
    /// Run config file; the data section seeds the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sample count (0 makes a valid empty dataset).
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// LR frame count (spacetime: sensor time slices).
    #[arg(long)]
    pub lr_frames: Option<usize>,
    /// LR nodes per spatial axis, comma separated.
    #[arg(long)]
    pub lr_space: Option<String>,
    /// HR frame count (spacetime: query time slices).
    #[arg(long)]
    pub hr_frames: Option<usize>,
    /// HR nodes per spatial axis, comma separated.
    #[arg(long)]
    pub hr_space: Option<String>,
    /// LR field source: coarse_solve or downsample.
    #[arg(long)]
    pub lr_mode: Option<String>,
    /// Keep only the first F LR frames (temporal layouts).
    #[arg(long)]
    pub partial_frames: Option<usize>,
    /// Forcing amplitude range "lo,hi" (exp1/exp3).
    #[arg(long)]
    pub alpha_range: Option<String>,
    /// Decay-rate range "lo,hi" (exp1/exp3).
    #[arg(long)]
    pub beta_range: Option<String>,
    /// Diffusivity range "lo,hi" (diff2d-var).
    #[arg(long)]
    pub diffusivity_range: Option<String>,
}

pub fn run_generate(args: &GenerateArgs) -> Result<()> {
    let started = Instant::now();
    let family = Family::parse(&args.problem).map_err(|e| CliError::Usage(e.to_string()))?;
    let rc = load_config_opt(&args.config)?;
    if let Some(exp) = &rc.experiment {
        if Family::parse(exp).map_err(|e| CliError::Usage(e.to_string()))? != family {
            return Err(CliError::Usage(format!(
                "config experiment {exp:?} conflicts with --problem {:?}",
                args.problem
            )));
        }
    }
    let n_samples = args
        .n_samples
        .or(rc.data.n_samples)
        .ok_or_else(|| CliError::Usage("sample count missing: pass --n-samples or set data.n_samples in the config".into()))?;
    let seed = args.seed.or(rc.data.seed).unwrap_or(0);

    let mut cfg = DatasetConfig::defaults(family, n_samples, seed);
    rc.data.apply(&mut cfg)?;
    cfg.n_samples = n_samples;
    cfg.seed = seed;
    if let Some(f) = args.lr_frames {
        cfg.lr_frames = f;
    }
    if let Some(s) = &args.lr_space {
        cfg.lr_spatial = parse_counts(s, "--lr-space")?;
    }
    if let Some(f) = args.hr_frames {
        cfg.hr_frames = f;
    }
    if let Some(s) = &args.hr_space {
        cfg.hr_spatial = parse_counts(s, "--hr-space")?;
    }
    if let Some(m) = &args.lr_mode {
        cfg.lr_mode = crate::runconfig::parse_lr_mode(m)?;
    }
    if let Some(f) = args.partial_frames {
        cfg.partial_frames = Some(f);
    }
    if let Some(r) = &args.alpha_range {
        cfg.alpha_range = Some(parse_range(r, "--alpha-range")?);
    }
    if let Some(r) = &args.beta_range {
        cfg.beta_range = Some(parse_range(r, "--beta-range")?);
    }
    if let Some(r) = &args.diffusivity_range {
        cfg.diffusivity_range = Some(parse_range(r, "--diffusivity-range")?);
    }
    cfg.validate().map_err(CliError::from)?;

    let header = header_for(&cfg);
    let records = threads::try_par_map(cfg.n_samples, |i| {
        generate_sample(&cfg, i).map_err(CliError::from)
    })?;
    let ds = Dataset { header, records };
    srop1::write_dataset(&args.out, &ds)?;

    let echo_path = echo_sibling(&args.out);
    write_echo(
        &echo_path,
        &json!({
            "experiment": family.name(),
            "data": &cfg,
            "paths": { "dataset": args.out.display().to_string() },
        }),
    )?;

    let h = &ds.header;
    println!(
        "wrote {} samples of {} ({:?} layout) to {}",
        h.n_samples,
        family.name(),
        h.layout,
        args.out.display()
    );
    println!(
        "  sensors {} | lr shape {:?} | hr queries {} | hr shape {:?}",
        h.s, h.lr_shape, h.hr_query_count, h.hr_shape
    );
    println!(
        "  seed {} | config echo {} | {:.2}s",
        h.seed,
        echo_path.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Echo file written next to a dataset file.
fn echo_sibling(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    out.with_file_name(name)
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for checkpoint, loss curve, and config echo.
    #[arg(long)]
    pub out: PathBuf,
    /// Run config file; model and train sections apply.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model variant: three_net, two_net, stack, distance, init_state_only.
    #[arg(long)]
    pub variant: Option<String>,
    /// Resume from a checkpoint (fixes the architecture).
    #[arg(long)]
    pub init_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda_physics: Option<f64>,
    /// Random query subset per sample per batch.
    #[arg(long)]
    pub query_batch: Option<usize>,
    /// Training fraction; the rest validates.
    #[arg(long)]
    pub split: Option<f64>,
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let ds = srop1::read_dataset(&args.dataset)?;
    let rc = load_config_opt(&args.config)?;

    let variant_name = args.variant.clone().or_else(|| rc.model.variant.clone());
    let spec = match &args.init_checkpoint {
        Some(ck_path) => {
            let (ck_spec, _) = checkpoint::load_checkpoint(ck_path)?;
            if let Some(v) = &variant_name {
                let v = Variant::parse(v).map_err(|e| CliError::Usage(e.to_string()))?;
                if v != ck_spec.variant {
                    return Err(CliError::Usage(format!(
                        "--variant {} conflicts with the checkpoint variant {}",
                        v.name(),
                        ck_spec.variant.name()
                    )));
                }
            }
            ck_spec
        }
        None => {
            let variant = match &variant_name {
                Some(v) => Variant::parse(v).map_err(|e| CliError::Usage(e.to_string()))?,
                None => Variant::ThreeNet,
            };
            let mut spec =
                ModelSpec::for_dataset(&ds.header, variant).map_err(CliError::from)?;
            rc.model.apply(&mut spec)?;
            spec.validate().map_err(CliError::from)?;
            spec
        }
    };
    check_compat(&spec, &ds.header)?;

    let mut tcfg = TrainConfig::default();
    rc.train.apply(&mut tcfg);
    if let Some(v) = args.epochs {
        tcfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        tcfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        tcfg.adam.learning_rate = v;
    }
    if let Some(v) = args.seed {
        tcfg.seed = v;
    }
    if let Some(v) = args.lambda_physics {
        tcfg.lambda_physics = v;
    }
    if let Some(v) = args.query_batch {
        tcfg.query_batch = Some(v);
    }
    if let Some(v) = args.split {
        tcfg.split = v;
    }

    let init = match &args.init_checkpoint {
        Some(ck_path) => checkpoint::load_checkpoint(ck_path)?.1,
        None => init_params(&spec, tcfg.seed).map_err(CliError::from)?,
    };

    let result = train(&spec, init, &ds, &tcfg).map_err(CliError::from)?;

    ensure_dir(&args.out)?;
    let ck_path = args.out.join("checkpoint.srck");
    checkpoint::save_checkpoint(&ck_path, &spec, &result.params)?;

    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for row in &result.history {
        csv.push_str(&format!(
            "{},{},{}\n",
            row.epoch, row.train_loss, row.val_loss
        ));
    }
    let csv_path = args.out.join("loss.csv");
    std::fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;

    write_echo(
        &args.out.join("config.json"),
        &json!({
            "experiment": ds.header.family.name(),
            "model": &spec,
            "train": &tcfg,
            "paths": {
                "dataset": args.dataset.display().to_string(),
                "out_dir": args.out.display().to_string(),
                "checkpoint": ck_path.display().to_string(),
            },
        }),
    )?;

    println!(
        "trained {} epochs on {} samples ({} params, variant {})",
        result.history.len(),
        ds.header.n_samples,
        result.params.total_len(),
        spec.variant.name()
    );
    if let Some(best) = result.history.iter().find(|s| s.epoch == result.best_epoch) {
        println!(
            "  best epoch {} | train loss {:.6e} | val loss {:.6e}",
            best.epoch, best.train_loss, best.val_loss
        );
    }
    println!(
        "  checkpoint {} | {:.2}s",
        ck_path.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Reject checkpoint/dataset pairs whose shapes cannot line up.
fn check_compat(spec: &ModelSpec, header: &DatasetHeader) -> Result<()> {
    let fail = |what: String| -> Result<()> {
        Err(CliError::Usage(format!(
            "checkpoint and dataset are incompatible: {what}"
        )))
    };
    if spec.layout != header.layout {
        return fail(format!(
            "model expects {:?} layout, dataset is {:?}",
            spec.layout, header.layout
        ));
    }
    if spec.sensor_count != header.s {
        return fail(format!(
            "model expects {} sensors, dataset provides {}",
            spec.sensor_count, header.s
        ));
    }
    if spec.coord_dim() != header.coord_dim() {
        return fail(format!(
            "model expects {} coordinate axes, dataset provides {}",
            spec.coord_dim(),
            header.coord_dim()
        ));
    }
    if header.layout == Layout::Temporal {
        if spec.lr_frames != header.lr_shape[0] || spec.lr_spatial[..] != header.lr_shape[1..] {
            return fail(format!(
                "model expects LR shape [{}, {:?}], dataset provides {:?}",
                spec.lr_frames, spec.lr_spatial, header.lr_shape
            ));
        }
        if spec.hr_frames != header.hr_frames() {
            return fail(format!(
                "model produces {} output frames, dataset holds {}",
                spec.hr_frames,
                header.hr_frames()
            ));
        }
        if spec.variant == Variant::InitStateOnly && spec.init_size != header.hr_query_count {
            return fail(format!(
                "model reads an initial state of {} values, dataset provides {}",
                spec.init_size, header.hr_query_count
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model checkpoint file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Held-out dataset file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output report JSON path.
    #[arg(long)]
    pub report: PathBuf,
    /// Baseline: auto, bicubic_grid, idw_scattered, or none.
    #[arg(long, default_value = "auto")]
    pub baseline: String,
}

fn aggregate(values: &[f64]) -> (f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    (mean, median, sorted[sorted.len() - 1])
}

/// Score every sample across the worker pool; numbers match the
/// single-threaded library path exactly.
pub fn parallel_evaluate(
    spec: &ModelSpec,
    params: &sropnet_core::model::ModelParams,
    ds: &Dataset,
    baseline: Option<BaselineMethod>,
) -> Result<EvalReport> {
    if ds.records.is_empty() {
        return Err(CliError::Usage("cannot evaluate an empty dataset".into()));
    }
    let header = &ds.header;
    let rows = threads::try_par_map(ds.records.len(), |i| {
        let rec = &ds.records[i];
        let inputs = SampleInputs::from_record(header, rec);
        let pred = sropnet_eval(spec, params, &inputs, &inputs.queries).map_err(CliError::from)?;
        let rel = rel_l2(&pred, &inputs.targets).map_err(CliError::from)?;
        let mse = pred
            .iter()
            .zip(&inputs.targets)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / pred.len() as f64;
        let base = match baseline {
            Some(method) => {
                let bp = baseline_interpolate(header, rec, method).map_err(CliError::from)?;
                Some(rel_l2(&bp, &inputs.targets).map_err(CliError::from)?)
            }
            None => None,
        };
        Ok::<_, CliError>((rel, mse, base))
    })?;

    let per_rel: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let per_mse: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let base_rel: Vec<f64> = rows.iter().filter_map(|r| r.2).collect();
    let (mean_rel_l2, median_rel_l2, max_rel_l2) = aggregate(&per_rel);
    let mean_mse = per_mse.iter().sum::<f64>() / per_mse.len() as f64;
    let baseline_report = baseline.map(|method| {
        let (mean, median, max) = aggregate(&base_rel);
        BaselineReport {
            method: method.name().into(),
            per_sample_rel_l2: base_rel,
            mean_rel_l2: mean,
            median_rel_l2: median,
            max_rel_l2: max,
        }
    });
    Ok(EvalReport {
        n_samples: ds.records.len(),
        per_sample_rel_l2: per_rel,
        per_sample_mse: per_mse,
        mean_rel_l2,
        median_rel_l2,
        max_rel_l2,
        mean_mse,
        baseline: baseline_report,
        wall_clock_seconds: 0.0,
    })
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    let (spec, params) = checkpoint::load_checkpoint(&args.checkpoint)?;
    let ds = srop1::read_dataset(&args.dataset)?;
    check_compat(&spec, &ds.header)?;
    let baseline = match args.baseline.as_str() {
        "auto" => Some(BaselineMethod::for_layout(ds.header.layout)),
        other => parse_baseline(other)?,
    };

    let mut report = parallel_evaluate(&spec, &params, &ds, baseline)?;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();

    let mut value = serde_json::to_value(&report)
        .map_err(|e| CliError::Data(format!("report serialization failed: {e}")))?;
    value.as_object_mut().expect("report object").insert(
        "config".into(),
        json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "dataset": args.dataset.display().to_string(),
            "baseline": baseline.map(|b| b.name()),
            "model": &spec,
        }),
    );
    write_echo(&args.report, &value)?;

    println!(
        "evaluated {} samples: rel L2 mean {:.4} | median {:.4} | max {:.4}",
        report.n_samples, report.mean_rel_l2, report.median_rel_l2, report.max_rel_l2
    );
    if let Some(b) = &report.baseline {
        println!(
            "  baseline {}: rel L2 mean {:.4} | median {:.4} | max {:.4}",
            b.method, b.mean_rel_l2, b.median_rel_l2, b.max_rel_l2
        );
    }
    println!(
        "  report {} | {:.2}s",
        args.report.display(),
        report.wall_clock_seconds
    );
    Ok(())
}

// ---------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model checkpoint file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file providing the conditioning sample.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Sample index within the dataset.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    /// Query grid "NX,NT" (1D) or "NX,NY,NT" (2D); spatial axes first.
    /// Omit to use the sample's own HR grid (temporal datasets).
    #[arg(long)]
    pub grid: Option<String>,
    /// Output directory for field files.
    #[arg(long)]
    pub out: PathBuf,
}

/// Cartesian product of per-axis grids, first axis outermost.
fn grid_rows(axes: &[Vec<f64>]) -> Vec<f64> {
    let dim = axes.len();
    let total: usize = axes.iter().map(|a| a.len()).product();
    let mut rows = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        for (a, &i) in axes.iter().zip(idx.iter()) {
            rows.push(a[i]);
        }
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    rows
}

pub fn run_predict(args: &PredictArgs) -> Result<()> {
    let started = Instant::now();
    let (spec, params) = checkpoint::load_checkpoint(&args.checkpoint)?;
    let ds = srop1::read_dataset(&args.dataset)?;
    check_compat(&spec, &ds.header)?;
    let header = &ds.header;
    if args.sample >= ds.records.len() {
        return Err(CliError::Usage(format!(
            "sample {} out of range: dataset holds {}",
            args.sample,
            ds.records.len()
        )));
    }
    let rec = &ds.records[args.sample];
    let inputs = SampleInputs::from_record(header, rec);
    let domain = header.family.domain();
    let d = header.d;

    // Resolve the query grid: spatial axis counts plus a frame count.
    let (space_counts, nt, queries) = match &args.grid {
        Some(text) => {
            let counts = parse_counts(text, "--grid")?;
            if counts.len() != d + 1 {
                return Err(CliError::Usage(format!(
                    "--grid needs {} values for a {d}D problem (spatial axes first, frames last), got {}",
                    d + 1,
                    counts.len()
                )));
            }
            let space_counts = counts[..d].to_vec();
            let nt = counts[d];
            let space_axes: Vec<Vec<f64>> = space_counts
                .iter()
                .zip(&domain.space)
                .map(|(&n, &(lo, hi))| linspace(lo, hi, n))
                .collect();
            let queries = match header.layout {
                Layout::Temporal => {
                    if nt != spec.hr_frames {
                        return Err(CliError::Usage(format!(
                            "the checkpoint fixes the output at {} frames; --grid asked for {nt} \
                             (spatial resolution is free, the time axis is not)",
                            spec.hr_frames
                        )));
                    }
                    grid_rows(&space_axes)
                }
                Layout::Spacetime => {
                    let mut axes = vec![linspace(domain.time.0, domain.time.1, nt)];
                    axes.extend(space_axes);
                    grid_rows(&axes)
                }
            };
            (space_counts, nt, queries)
        }
        None => match header.layout {
            Layout::Temporal => {
                let hr_shape = header.hr_shape.clone().expect("temporal HR shape");
                (
                    hr_shape[1..].to_vec(),
                    hr_shape[0],
                    inputs.queries.clone(),
                )
            }
            Layout::Spacetime => {
                return Err(CliError::Usage(
                    "scattered spacetime samples have no native grid; pass --grid NX,NT".into(),
                ))
            }
        },
    };

    let values = sropnet_eval(&spec, &params, &inputs, &queries).map_err(CliError::from)?;
    let mut shape = vec![nt];
    shape.extend_from_slice(&space_counts);
    if values.len() != shape.iter().product::<usize>() {
        return Err(CliError::Data(format!(
            "prediction holds {} values, grid shape {:?} needs {}",
            values.len(),
            shape,
            shape.iter().product::<usize>()
        )));
    }

    ensure_dir(&args.out)?;
    let pred_path = args.out.join("pred.fld");
    fieldfile::write_field(
        &pred_path,
        &fieldfile::FieldHeader::new(
            shape.clone(),
            domain.time,
            domain.space.clone(),
            args.sample,
            "prediction",
        ),
        &values,
    )?;
    let mut written = vec![pred_path.display().to_string()];

    if args.grid.is_none() {
        // On the sample's own grid the stored targets line up exactly.
        let truth_path = args.out.join("truth.fld");
        fieldfile::write_field(
            &truth_path,
            &fieldfile::FieldHeader::new(
                shape.clone(),
                domain.time,
                domain.space.clone(),
                args.sample,
                "truth",
            ),
            &inputs.targets,
        )?;
        written.push(truth_path.display().to_string());
    }
    if header.layout == Layout::Temporal {
        let lr_path = args.out.join("lr.fld");
        fieldfile::write_field(
            &lr_path,
            &fieldfile::FieldHeader::new(
                header.lr_shape.clone(),
                header.lr_t_range,
                domain.space.clone(),
                args.sample,
                "lr",
            ),
            &rec.lr_f64(),
        )?;
        written.push(lr_path.display().to_string());
    }

    println!(
        "predicted sample {} on a {:?} grid ({} values)",
        args.sample,
        shape,
        values.len()
    );
    println!("  wrote {} | {:.2}s", written.join(", "), started.elapsed().as_secs_f64());
    Ok(())
}

// ---------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Field file to render.
    #[arg(long)]
    pub field: PathBuf,
    /// Second field; renders |field - compare| error panels instead.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Output directory for PGM images, CSV grids, and the scale sidecar.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_plot(args: &PlotArgs) -> Result<()> {
    let (header, mut values) = fieldfile::read_field(&args.field)?;
    let mode = match &args.compare {
        Some(other_path) => {
            let (other_header, other) = fieldfile::read_field(other_path)?;
            if other_header.shape != header.shape {
                return Err(CliError::Usage(format!(
                    "fields disagree on shape: {:?} vs {:?}",
                    header.shape, other_header.shape
                )));
            }
            for (v, o) in values.iter_mut().zip(&other) {
                *v = (*v - *o).abs();
            }
            "error"
        }
        None => "minmax",
    };
    let (frames, height, width) = header.frame_geometry()?;
    ensure_dir(&args.out)?;

    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let (scale_min, scale_max) = match mode {
        "error" => (0.0, hi.max(0.0)),
        _ => (lo, hi),
    };

    let mut images = Vec::new();
    if header.shape.len() == 2 {
        // 1D problems render as one space-time image: rows are frames.
        let pixels = match mode {
            "error" => pgm::bytes_error(&values, scale_max),
            _ => pgm::bytes_minmax(&values, scale_min, scale_max),
        };
        let img = args.out.join("field.pgm");
        pgm::write_pgm(&img, width, frames, &pixels)?;
        pgm::write_csv(&args.out.join("field.csv"), width, frames, &values)?;
        images.push("field.pgm".to_string());
    } else {
        for f in 0..frames {
            let frame = &values[f * height * width..(f + 1) * height * width];
            let pixels = match mode {
                "error" => pgm::bytes_error(frame, scale_max),
                _ => pgm::bytes_minmax(frame, scale_min, scale_max),
            };
            let name = format!("frame_{f:04}.pgm");
            pgm::write_pgm(&args.out.join(&name), width, height, &pixels)?;
            pgm::write_csv(
                &args.out.join(format!("frame_{f:04}.csv")),
                width,
                height,
                frame,
            )?;
            images.push(name);
        }
    }

    write_echo(
        &args.out.join("plot.json"),
        &json!({
            "mode": mode,
            "min": scale_min,
            "max": scale_max,
            "frames": frames,
            "height": height,
            "width": width,
            "images": images,
            "source": args.field.display().to_string(),
            "compare": args.compare.as_ref().map(|p| p.display().to_string()),
        }),
    )?;

    println!(
        "rendered {} image(s) ({mode} scale [{:.4}, {:.4}]) into {}",
        images.len(),
        scale_min,
        scale_max,
        args.out.display()
    );
    Ok(())
}
