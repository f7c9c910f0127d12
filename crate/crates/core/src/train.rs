//! Loss construction, the training loop, evaluation metrics, and the
//! hookup to the interpolation baselines.
//!
//! The data loss is a mean squared error over every (sample, query)
//! pair of a batch; the optional physics loss penalizes the
//! heat-equation residual evaluated with central finite differences on
//! the model's own predictions at interior collocation points.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::baseline;
use crate::dataset::{Dataset, DatasetHeader, Layout, SampleRecord};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{
    bind_params, graph_eval, sropnet_eval, BoundParams, ModelParams, ModelSpec, SampleInputs,
};
use crate::optim::{AdamConfig, AdamState};
use crate::pde::{forcing_eval, Forcing};
use crate::rng::CounterRng;
use crate::tensor::{Graph, TensorId};

/// Optimization settings.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Weight of the data term.
    pub lambda_data: f64,
    /// Weight of the finite-difference physics term (scattered layouts).
    pub lambda_physics: f64,
    /// Interior collocation points per epoch for the physics term.
    pub n_collocation: usize,
    /// Central-difference step for the physics term.
    pub fd_step: f64,
    /// Fraction of samples used for training; the rest validate.
    pub split: f64,
    /// Random query subset per sample per batch; `None` uses every query.
    pub query_batch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            lambda_data: 1.0,
            lambda_physics: 0.0,
            n_collocation: 128,
            fd_step: 1e-2,
            split: 0.9,
            query_batch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lambda_data >= 0.0 && self.lambda_physics >= 0.0) {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if self.lambda_data + self.lambda_physics <= 0.0 {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Config("finite-difference step must be positive".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config("split fraction must lie in (0, 1)".into()));
        }
        if self.lambda_physics > 0.0 && self.n_collocation == 0 {
            return Err(Error::Config("physics loss needs collocation points".into()));
        }
        if let Some(qb) = self.query_batch {
            if qb == 0 {
                return Err(Error::Config("query subset size must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One sample's contribution to a batch loss.
pub struct BatchItem<'a> {
    pub inputs: &'a SampleInputs,
    /// Row-major query rows (possibly a subset of the sample's queries).
    pub queries: &'a [f64],
    /// Targets matching `queries` in the model's output layout.
    pub targets: &'a [f64],
}

/// Mean squared error over all (sample, query point) pairs of a batch,
/// built on the graph so it is differentiable.
pub fn data_loss(
    g: &mut Graph,
    spec: &ModelSpec,
    params: &ModelParams,
    bound: &BoundParams,
    batch: &[BatchItem<'_>],
) -> Result<TensorId> {
    if batch.is_empty() {
        return Err(Error::Contract("data loss needs a nonempty batch".into()));
    }
    let mut total: Option<TensorId> = None;
    let mut count = 0usize;
    for item in batch {
        let out = graph_eval(g, spec, params, bound, item.inputs, item.queries)?;
        let n = g.value(out).len();
        if item.targets.len() != n {
            return Err(Error::Dimension {
                op: "data_loss",
                lhs: vec![item.targets.len()],
                rhs: vec![n],
            });
        }
        let shape = g.shape(out).to_vec();
        let t = g.constant(item.targets.to_vec(), &shape)?;
        let diff = g.sub(out, t)?;
        let sq = g.mul(diff, diff)?;
        let s = g.sum_all(sq);
        total = Some(match total {
            Some(acc) => g.add(acc, s)?,
            None => s,
        });
        count += n;
    }
    g.scale(total.expect("nonempty batch"), 1.0 / count as f64)
}

/// Heat-equation residual of an arbitrary spacetime field at one
/// `(t, x...)` point via central differences with step `h`.
///
/// The graph-mode physics loss applies the same stencil to the model's
/// own evaluations; this plain form exists so closed-form solutions can
/// be checked directly.
pub fn fd_residual<F: Fn(&[f64]) -> f64>(
    u: &F,
    diffusivity: f64,
    forcing: &Forcing,
    point: &[f64],
    h: f64,
) -> f64 {
    let cd = point.len();
    let d = cd - 1;
    let center = u(point);
    let mut shifted = point.to_vec();
    shifted[0] = point[0] + h;
    let u_tp = u(&shifted);
    shifted[0] = point[0] - h;
    let u_tm = u(&shifted);
    let du_dt = (u_tp - u_tm) / (2.0 * h);
    let mut lap = 0.0;
    for a in 0..d {
        let mut s = point.to_vec();
        s[1 + a] = point[1 + a] + h;
        let up = u(&s);
        s[1 + a] = point[1 + a] - h;
        let um = u(&s);
        lap += (up - 2.0 * center + um) / (h * h);
    }
    let f = forcing_eval(forcing, diffusivity, &point[1..], point[0]);
    du_dt - diffusivity * lap - f
}

/// Uniform interior collocation points, kept strictly more than `h`
/// from every boundary.
pub fn sample_collocation(
    rng: &mut CounterRng,
    ranges: &[(f64, f64)],
    n: usize,
    h: f64,
) -> Result<Vec<f64>> {
    let margin = 2.0 * h;
    for &(lo, hi) in ranges {
        if lo + margin >= hi - margin {
            return Err(Error::Config(
                "finite-difference step too large for the domain".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(n * ranges.len());
    for _ in 0..n {
        for &(lo, hi) in ranges {
            out.push(rng.uniform(lo + margin, hi - margin));
        }
    }
    Ok(out)
}

/// Mean squared heat-equation residual of the model at collocation
/// points, differentiable through the stencil evaluations.
///
/// Scattered layouts only: the stencil shifts query times, which
/// gridded outputs cannot express.
pub fn physics_residual(
    g: &mut Graph,
    spec: &ModelSpec,
    params: &ModelParams,
    bound: &BoundParams,
    inputs: &SampleInputs,
    forcing: &Forcing,
    diffusivity: f64,
    collocation: &[f64],
    h: f64,
) -> Result<TensorId> {
    if spec.layout != Layout::Spacetime {
        return Err(Error::Contract(
            "the physics residual needs a scattered spacetime layout".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let cd = spec.coord_dim();
    let d = cd - 1;
    if collocation.is_empty() || collocation.len() % cd != 0 {
        return Err(Error::Dimension {
            op: "physics_residual",
            lhs: vec![collocation.len()],
            rhs: vec![cd],
        });
    }
    let m = collocation.len() / cd;
    for q in 0..m {
        for a in 0..cd {
            let (lo, hi) = spec.coord_ranges[a];
            let v = collocation[q * cd + a];
            if !(v - lo > h && hi - v > h) {
                return Err(Error::Contract(alloc::format!(
                    "collocation point {q} is within {h} of the axis-{a} boundary"
                )));
            }
        }
    }
    // one stacked evaluation: center, t+h, t-h, then +h/-h per space axis
    let segments = 3 + 2 * d;
    let mut stacked = Vec::with_capacity(segments * collocation.len());
    stacked.extend_from_slice(collocation);
    for (axis, sign) in [(0usize, 1.0), (0, -1.0)]
        .into_iter()
        .chain((0..d).flat_map(|a| [(1 + a, 1.0), (1 + a, -1.0)]))
    {
        for q in 0..m {
            for c in 0..cd {
                let v = collocation[q * cd + c];
                stacked.push(if c == axis { v + sign * h } else { v });
            }
        }
    }
    let out = graph_eval(g, spec, params, bound, inputs, &stacked)?;
    let seg = |g: &mut Graph, i: usize| g.slice(out, i * m, m);
    let center = seg(g, 0)?;
    let u_tp = seg(g, 1)?;
    let u_tm = seg(g, 2)?;
    let dt = g.sub(u_tp, u_tm)?;
    let du_dt = g.scale(dt, 1.0 / (2.0 * h))?;
    let two_c = g.scale(center, 2.0)?;
    let mut lap: Option<TensorId> = None;
    for a in 0..d {
        let up = seg(g, 3 + 2 * a)?;
        let um = seg(g, 3 + 2 * a + 1)?;
        let diff = g.sub(up, two_c)?;
        let second = g.add(diff, um)?;
        lap = Some(match lap {
            Some(acc) => g.add(acc, second)?,
            None => second,
        });
    }
    let lap = g.scale(lap.expect("at least one space axis"), diffusivity / (h * h))?;
    let without_f = g.sub(du_dt, lap)?;
    let mut f_vals = Vec::with_capacity(m);
    for q in 0..m {
        let row = &collocation[q * cd..(q + 1) * cd];
        f_vals.push(forcing_eval(forcing, diffusivity, &row[1..], row[0]));
    }
    let f = g.constant(f_vals, &[m])?;
    let r = g.sub(without_f, f)?;
    let sq = g.mul(r, r)?;
    Ok(g.mean_all(sq))
}

/// Per-epoch loss record.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Training output: the best-validation parameters, the final-epoch
/// parameters, and the loss history.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ModelParams,
    pub final_params: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Per-sample training context derived from the dataset once.
struct TrainSample {
    inputs: SampleInputs,
    forcing: Forcing,
    diffusivity: f64,
}

fn subset_queries(
    spec: &ModelSpec,
    inputs: &SampleInputs,
    cols: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let cd = spec.coord_dim();
    let m = inputs.queries.len() / cd;
    let rows = spec.rows();
    let mut queries = Vec::with_capacity(cols.len() * cd);
    for &q in cols {
        queries.extend_from_slice(&inputs.queries[q * cd..(q + 1) * cd]);
    }
    let mut targets = Vec::with_capacity(rows * cols.len());
    for r in 0..rows {
        for &q in cols {
            targets.push(inputs.targets[r * m + q]);
        }
    }
    (queries, targets)
}

/// Mean squared error of the plain forward over all queries of the
/// given samples (the validation metric).
fn plain_mse(spec: &ModelSpec, params: &ModelParams, samples: &[&TrainSample]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in samples {
        let pred = sropnet_eval(spec, params, &s.inputs, &s.inputs.queries)?;
        for (p, t) in pred.iter().zip(&s.inputs.targets) {
            let d = p - t;
            sum += d * d;
        }
        count += pred.len();
    }
    Ok(sum / count.max(1) as f64)
}

/// Mini-batch Adam on `lambda_data * L_data + lambda_physics * L_physics`.
///
/// Deterministic for a fixed seed and config: sample order, collocation
/// points, and query subsets all derive from counter-mode substreams.
/// The best-validation parameters are retained alongside the final ones.
pub fn train(
    spec: &ModelSpec,
    init: ModelParams,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    spec.validate()?;
    let header = &dataset.header;
    if spec.layout != header.layout
        || spec.sensor_count != header.s
        || spec.coord_dim() != header.coord_dim()
    {
        return Err(Error::Contract(
            "model spec does not match the dataset layout".into(),
        ));
    }
    if cfg.lambda_physics > 0.0 && spec.layout != Layout::Spacetime {
        return Err(Error::Config(
            "the physics loss applies to scattered spacetime layouts only".into(),
        ));
    }
    let n = dataset.records.len();
    if n == 0 {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let samples: Vec<TrainSample> = dataset
        .records
        .iter()
        .map(|rec| {
            let (forcing, diffusivity) = header.family.decode_params(&rec.params)?;
            Ok(TrainSample {
                inputs: SampleInputs::from_record(header, rec),
                forcing,
                diffusivity,
            })
        })
        .collect::<Result<_>>()?;
    let n_train = ((cfg.split * n as f64) as usize).clamp(1, n);
    let val_refs: Vec<&TrainSample> = samples[n_train..].iter().collect();

    let mut params = init;
    let mut adam = AdamState::new(
        cfg.adam,
        &params.values.iter().map(|v| v.len()).collect::<Vec<_>>(),
    );
    let master = CounterRng::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        master.substream(4 * epoch as u64).shuffle(&mut order);
        let collocation = if cfg.lambda_physics > 0.0 {
            let mut crng = master.substream(4 * epoch as u64 + 1);
            Some(sample_collocation(
                &mut crng,
                &spec.coord_ranges,
                cfg.n_collocation,
                cfg.fd_step,
            )?)
        } else {
            None
        };
        let mut qrng = master.substream(4 * epoch as u64 + 2);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Graph::new();
            let bound = bind_params(&mut g, &params)?;
            // per-sample query subsets, drawn even when unused so the
            // stream position is independent of query_batch
            let mut subsets: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let s = &samples[idx];
                let cd = spec.coord_dim();
                let m = s.inputs.queries.len() / cd;
                match cfg.query_batch {
                    Some(qb) if qb < m => {
                        let mut cols: Vec<usize> = (0..m).collect();
                        qrng.shuffle(&mut cols);
                        cols.truncate(qb);
                        subsets.push(subset_queries(spec, &s.inputs, &cols));
                    }
                    _ => subsets.push((s.inputs.queries.clone(), s.inputs.targets.clone())),
                }
            }
            let items: Vec<BatchItem<'_>> = chunk
                .iter()
                .zip(&subsets)
                .map(|(&idx, (q, t))| BatchItem {
                    inputs: &samples[idx].inputs,
                    queries: q,
                    targets: t,
                })
                .collect();
            let mut loss = data_loss(&mut g, spec, &params, &bound, &items)?;
            if cfg.lambda_data != 1.0 {
                loss = g.scale(loss, cfg.lambda_data)?;
            }
            if let Some(colloc) = &collocation {
                let mut phys: Option<TensorId> = None;
                for &idx in chunk {
                    let s = &samples[idx];
                    let p = physics_residual(
                        &mut g,
                        spec,
                        &params,
                        &bound,
                        &s.inputs,
                        &s.forcing,
                        s.diffusivity,
                        colloc,
                        cfg.fd_step,
                    )?;
                    phys = Some(match phys {
                        Some(acc) => g.add(acc, p)?,
                        None => p,
                    });
                }
                let phys = g.scale(
                    phys.expect("nonempty batch"),
                    cfg.lambda_physics / chunk.len() as f64,
                )?;
                loss = g.add(loss, phys)?;
            }
            let loss_value = g.value(loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: bi,
                    param_norm: params.l2_norm(),
                });
            }
            g.backward(loss)?;
            let mut grads: Vec<Vec<f64>> = Vec::with_capacity(bound.ids.len());
            for (i, id) in bound.ids.iter().enumerate() {
                let grad = g.grad(*id).ok_or_else(|| {
                    Error::Contract(alloc::format!(
                        "no gradient reached parameter '{}'",
                        params.names[i]
                    ))
                })?;
                grads.push(grad.to_vec());
            }
            adam.step(&mut params.values, &mut grads)?;
            loss_sum += loss_value;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let val_loss = if val_refs.is_empty() {
            train_loss
        } else {
            plain_mse(spec, &params, &val_refs)?
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: batches,
                param_norm: params.l2_norm(),
            });
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            best_epoch = epoch;
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(TrainResult {
        params: best_params,
        final_params: params,
        history,
        best_epoch,
    })
}

/// Relative L2 error over all query points of one sample.
pub fn rel_l2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Dimension {
            op: "rel_l2",
            lhs: vec![pred.len()],
            rhs: vec![truth.len()],
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        num += (p - t) * (p - t);
        den += t * t;
    }
    if den == 0.0 {
        return Err(Error::Contract("reference values are identically zero".into()));
    }
    Ok(math::sqrt(num) / math::sqrt(den))
}

/// Interpolation baseline choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BaselineMethod {
    /// Separable Catmull-Rom cubic on the LR grid, linear in time.
    BicubicGrid,
    /// Shepard inverse-distance weighting over all spacetime sensors.
    IdwScattered,
}

impl BaselineMethod {
    /// The default method for a layout: cubic for grids, IDW for
    /// scattered sensors.
    pub fn for_layout(layout: Layout) -> Self {
        match layout {
            Layout::Temporal => BaselineMethod::BicubicGrid,
            Layout::Spacetime => BaselineMethod::IdwScattered,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::BicubicGrid => "bicubic_grid",
            BaselineMethod::IdwScattered => "idw_scattered",
        }
    }
}

/// Predict a sample's targets from its LR field alone by interpolation.
pub fn baseline_interpolate(
    header: &DatasetHeader,
    rec: &SampleRecord,
    method: BaselineMethod,
) -> Result<Vec<f64>> {
    let sensor = rec.sensor_f64();
    let lr = rec.lr_f64();
    let queries = rec.query_f64();
    match method {
        BaselineMethod::BicubicGrid => {
            if header.layout != Layout::Temporal {
                return Err(Error::Contract(
                    "cubic interpolation needs the LR field on a regular grid".into(),
                ));
            }
            let grids = baseline::sensor_axis_grids(&sensor, &header.lr_shape[1..])?;
            baseline::bicubic_grid(
                &lr,
                &grids,
                &header.lr_frame_times(),
                &queries,
                &header.hr_frame_times(),
            )
        }
        BaselineMethod::IdwScattered => {
            let domain = header.family.domain();
            let mut axes = vec![domain.time];
            axes.extend_from_slice(&domain.space);
            match header.layout {
                Layout::Spacetime => baseline::idw_scattered(&sensor, &lr, &queries, &axes),
                Layout::Temporal => {
                    // lift the gridded LR field to a spacetime point cloud
                    let times = header.lr_frame_times();
                    let n_space = header.s;
                    let cd = axes.len();
                    let mut coords = vec![0.0; cd * times.len() * n_space];
                    let total = times.len() * n_space;
                    for (f, &t) in times.iter().enumerate() {
                        for i in 0..n_space {
                            let p = f * n_space + i;
                            coords[p] = t;
                            for a in 0..cd - 1 {
                                coords[(1 + a) * total + p] = sensor[a * n_space + i];
                            }
                        }
                    }
                    let hr_times = header.hr_frame_times();
                    let d = cd - 1;
                    let m = queries.len() / d;
                    let mut q_rows = Vec::with_capacity(cd * hr_times.len() * m);
                    for &t in &hr_times {
                        for q in 0..m {
                            q_rows.push(t);
                            q_rows.extend_from_slice(&queries[q * d..(q + 1) * d]);
                        }
                    }
                    baseline::idw_scattered(&coords, &lr, &q_rows, &axes)
                }
            }
        }
    }
}

/// Baseline errors over a dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineReport {
    pub method: String,
    pub per_sample_rel_l2: Vec<f64>,
    pub mean_rel_l2: f64,
    pub median_rel_l2: f64,
    pub max_rel_l2: f64,
}

/// Evaluation metrics over a dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub n_samples: usize,
    pub per_sample_rel_l2: Vec<f64>,
    pub per_sample_mse: Vec<f64>,
    pub mean_rel_l2: f64,
    pub median_rel_l2: f64,
    pub max_rel_l2: f64,
    pub mean_mse: f64,
    pub baseline: Option<BaselineReport>,
    /// Filled by the caller; the library does no timing.
    pub wall_clock_seconds: f64,
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

/// Score the model (and optionally the layout's default interpolation
/// baseline) on every sample of a held-out dataset.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ModelParams,
    dataset: &Dataset,
    baseline: Option<BaselineMethod>,
) -> Result<EvalReport> {
    if dataset.records.is_empty() {
        return Err(Error::Config("cannot evaluate an empty dataset".into()));
    }
    let header = &dataset.header;
    let mut per_rel = Vec::with_capacity(dataset.records.len());
    let mut per_mse = Vec::with_capacity(dataset.records.len());
    let mut base_rel = Vec::new();
    for rec in &dataset.records {
        let inputs = SampleInputs::from_record(header, rec);
        let pred = sropnet_eval(spec, params, &inputs, &inputs.queries)?;
        per_rel.push(rel_l2(&pred, &inputs.targets)?);
        let mse = pred
            .iter()
            .zip(&inputs.targets)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / pred.len() as f64;
        per_mse.push(mse);
        if let Some(method) = baseline {
            let bp = baseline_interpolate(header, rec, method)?;
            base_rel.push(rel_l2(&bp, &inputs.targets)?);
        }
    }
    let (mean_rel_l2, median_rel_l2, max_rel_l2) = aggregate(&per_rel);
    let mean_mse = per_mse.iter().sum::<f64>() / per_mse.len() as f64;
    let baseline = baseline.map(|method| {
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
        n_samples: dataset.records.len(),
        per_sample_rel_l2: per_rel,
        per_sample_mse: per_mse,
        mean_rel_l2,
        median_rel_l2,
        max_rel_l2,
        mean_mse,
        baseline,
        wall_clock_seconds: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, DatasetConfig, Family};
    use crate::model::{init_params, BranchKind, Variant};
    use crate::pde::exact_solution_exp3;

    /// Tiny scattered-layout dataset plus a matching small model spec.
    fn tiny_spacetime(n_samples: usize, seed: u64) -> (Dataset, ModelSpec) {
        let mut cfg = DatasetConfig::defaults(Family::Exp3, n_samples, seed);
        cfg.lr_frames = 4;
        cfg.lr_spatial = vec![4];
        cfg.hr_frames = 6;
        cfg.hr_spatial = vec![6];
        let ds = build_dataset(&cfg).unwrap();
        let mut spec = ModelSpec::for_dataset(&ds.header, Variant::ThreeNet).unwrap();
        spec.latent = 8;
        spec.branch = BranchKind::Mlp { hidden: vec![16] };
        spec.sensor_hidden = vec![8];
        spec.trunk_hidden = vec![16, 16];
        spec.validate().unwrap();
        (ds, spec)
    }

    fn zeroed(params: &ModelParams) -> ModelParams {
        let mut p = params.clone();
        for v in &mut p.values {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        p
    }

    #[test]
    fn data_loss_is_zero_when_outputs_equal_targets() {
        let (ds, spec) = tiny_spacetime(1, 1);
        let params = init_params(&spec, 2).unwrap();
        let inputs = SampleInputs::from_record(&ds.header, &ds.records[0]);
        let pred = sropnet_eval(&spec, &params, &inputs, &inputs.queries).unwrap();
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let items = [BatchItem {
            inputs: &inputs,
            queries: &inputs.queries,
            targets: &pred,
        }];
        let loss = data_loss(&mut g, &spec, &params, &bound, &items).unwrap();
        assert_eq!(g.value(loss)[0], 0.0);
    }

    #[test]
    fn data_loss_of_constant_model_is_squared_offset() {
        let (ds, spec) = tiny_spacetime(1, 3);
        let mut params = zeroed(&init_params(&spec, 2).unwrap());
        let bias = params.index("comb.bias").unwrap();
        params.values[bias][0] = 0.7;
        let inputs = SampleInputs::from_record(&ds.header, &ds.records[0]);
        let targets = vec![0.2; inputs.targets.len()];
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let items = [BatchItem {
            inputs: &inputs,
            queries: &inputs.queries,
            targets: &targets,
        }];
        let loss = data_loss(&mut g, &spec, &params, &bound, &items).unwrap();
        let want = (0.7 - 0.2) * (0.7 - 0.2);
        assert!((g.value(loss)[0] - want).abs() < 1e-15);
    }

    #[test]
    fn data_loss_matches_straight_loop_mse() {
        let (ds, spec) = tiny_spacetime(3, 5);
        let params = init_params(&spec, 6).unwrap();
        let inputs: Vec<SampleInputs> = ds
            .records
            .iter()
            .map(|r| SampleInputs::from_record(&ds.header, r))
            .collect();
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let items: Vec<BatchItem<'_>> = inputs
            .iter()
            .map(|i| BatchItem {
                inputs: i,
                queries: &i.queries,
                targets: &i.targets,
            })
            .collect();
        let loss = data_loss(&mut g, &spec, &params, &bound, &items).unwrap();
        let mut sum = 0.0;
        let mut count = 0;
        for i in &inputs {
            let pred = sropnet_eval(&spec, &params, i, &i.queries).unwrap();
            for (p, t) in pred.iter().zip(&i.targets) {
                sum += (p - t) * (p - t);
            }
            count += pred.len();
        }
        assert!((g.value(loss)[0] - sum / count as f64).abs() < 1e-12);
    }

    #[test]
    fn physics_residual_of_zero_model_and_zero_forcing_is_zero() {
        let (ds, spec) = tiny_spacetime(1, 7);
        let params = zeroed(&init_params(&spec, 2).unwrap());
        let inputs = SampleInputs::from_record(&ds.header, &ds.records[0]);
        let colloc = [0.5, 0.1, 1.0, -0.2];
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let r = physics_residual(
            &mut g,
            &spec,
            &params,
            &bound,
            &inputs,
            &Forcing::None,
            1.0,
            &colloc,
            1e-2,
        )
        .unwrap();
        assert_eq!(g.value(r)[0], 0.0);
    }

    #[test]
    fn physics_residual_of_constant_model_is_zero() {
        // all stencil differences of a constant vanish
        let (ds, spec) = tiny_spacetime(1, 8);
        let mut params = zeroed(&init_params(&spec, 2).unwrap());
        let bias = params.index("comb.bias").unwrap();
        params.values[bias][0] = 0.5;
        let inputs = SampleInputs::from_record(&ds.header, &ds.records[0]);
        let colloc = [1.0, 0.3];
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let r = physics_residual(
            &mut g,
            &spec,
            &params,
            &bound,
            &inputs,
            &Forcing::None,
            1.0,
            &colloc,
            1e-2,
        )
        .unwrap();
        assert_eq!(g.value(r)[0], 0.0);
    }

    #[test]
    fn physics_residual_rejects_near_boundary_collocation() {
        let (ds, spec) = tiny_spacetime(1, 9);
        let params = init_params(&spec, 2).unwrap();
        let inputs = SampleInputs::from_record(&ds.header, &ds.records[0]);
        let h = 1e-2;
        // time axis is [0, 2]; this point is within h of the lower end
        let colloc = [0.005, 0.0];
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let err = physics_residual(
            &mut g,
            &spec,
            &params,
            &bound,
            &inputs,
            &Forcing::None,
            1.0,
            &colloc,
            h,
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn physics_residual_rejects_gridded_layouts() {
        let mut cfg = DatasetConfig::defaults(Family::Exp1, 1, 1);
        cfg.lr_frames = 4;
        cfg.lr_spatial = vec![6];
        cfg.hr_frames = 4;
        cfg.hr_spatial = vec![8];
        let ds = build_dataset(&cfg).unwrap();
        let mut spec = ModelSpec::for_dataset(&ds.header, Variant::TwoNet).unwrap();
        spec.latent = 4;
        spec.branch = BranchKind::LstmMlp {
            state: 4,
            head_hidden: vec![4],
            time_upscale: false,
        };
        spec.trunk_hidden = vec![4];
        spec.validate().unwrap();
        let params = init_params(&spec, 2).unwrap();
        let inputs = SampleInputs::from_record(&ds.header, &ds.records[0]);
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let err = physics_residual(
            &mut g,
            &spec,
            &params,
            &bound,
            &inputs,
            &Forcing::None,
            1.0,
            &[1.0, 0.0],
            1e-2,
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn fd_residual_vanishes_on_the_analytic_solution() {
        // the closed-form solution satisfies the forced heat equation, so
        // the only residual is the O(h^2) stencil truncation error
        let (alpha, beta) = (2.0, -0.5);
        let u = |p: &[f64]| exact_solution_exp3(alpha, beta, p[1], p[0]);
        let forcing = Forcing::Exp3 { alpha, beta };
        let mut rng = CounterRng::new(11);
        let mut points = Vec::new();
        for _ in 0..50 {
            points.push([rng.uniform(0.2, 1.8), rng.uniform(-0.8, 0.8)]);
        }
        let rms = |h: f64| {
            let s: f64 = points
                .iter()
                .map(|p| {
                    let r = fd_residual(&u, 1.0, &forcing, p, h);
                    r * r
                })
                .sum();
            math::sqrt(s / points.len() as f64)
        };
        assert!(rms(1e-3) < 1e-3, "rms {} at h=1e-3", rms(1e-3));
        // second-order convergence: each halving divides the error by ~4
        let (r1, r2, r3) = (rms(1e-2), rms(5e-3), rms(2.5e-3));
        let q1 = r1 / r2;
        let q2 = r2 / r3;
        assert!((3.0..=5.0).contains(&q1), "ratio {q1}");
        assert!((3.0..=5.0).contains(&q2), "ratio {q2}");
    }

    #[test]
    fn graph_physics_residual_matches_plain_stencil() {
        let (ds, spec) = tiny_spacetime(1, 13);
        let params = init_params(&spec, 14).unwrap();
        let inputs = SampleInputs::from_record(&ds.header, &ds.records[0]);
        let h = 1e-2;
        let mut rng = CounterRng::new(15);
        let mut colloc = Vec::new();
        for _ in 0..8 {
            colloc.push(rng.uniform(0.1, 1.9));
            colloc.push(rng.uniform(-0.9, 0.9));
        }
        let forcing = Forcing::Exp3 {
            alpha: 1.5,
            beta: -0.25,
        };
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let r = physics_residual(
            &mut g, &spec, &params, &bound, &inputs, &forcing, 1.0, &colloc, h,
        )
        .unwrap();
        let u = |p: &[f64]| {
            sropnet_eval(&spec, &params, &inputs, p).unwrap()[0]
        };
        let mut sum = 0.0;
        for q in 0..8 {
            let res = fd_residual(&u, 1.0, &forcing, &colloc[q * 2..q * 2 + 2], h);
            sum += res * res;
        }
        assert!((g.value(r)[0] - sum / 8.0).abs() < 1e-10);
    }

    #[test]
    fn gradient_reaches_every_parameter() {
        let (ds, spec) = tiny_spacetime(2, 17);
        let params = init_params(&spec, 18).unwrap();
        let inputs: Vec<SampleInputs> = ds
            .records
            .iter()
            .map(|r| SampleInputs::from_record(&ds.header, r))
            .collect();
        let mut g = Graph::new();
        let bound = bind_params(&mut g, &params).unwrap();
        let items: Vec<BatchItem<'_>> = inputs
            .iter()
            .map(|i| BatchItem {
                inputs: i,
                queries: &i.queries,
                targets: &i.targets,
            })
            .collect();
        let data = data_loss(&mut g, &spec, &params, &bound, &items).unwrap();
        let phys = physics_residual(
            &mut g,
            &spec,
            &params,
            &bound,
            &inputs[0],
            &Forcing::Exp3 {
                alpha: 1.0,
                beta: -0.5,
            },
            1.0,
            &[1.0, 0.0, 0.5, 0.5],
            1e-2,
        )
        .unwrap();
        let phys = g.scale(phys, 0.5).unwrap();
        let loss = g.add(data, phys).unwrap();
        g.backward(loss).unwrap();
        for (i, id) in bound.ids.iter().enumerate() {
            let grad = g.grad(*id).unwrap_or_else(|| {
                panic!("no gradient for '{}'", params.names[i])
            });
            assert!(
                grad.iter().all(|&v| v != 0.0),
                "zero gradient entries in '{}'",
                params.names[i]
            );
        }
    }

    #[test]
    fn training_overfits_a_single_sample() {
        let (ds, spec) = tiny_spacetime(1, 21);
        let params = init_params(&spec, 22).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            split: 0.9,
            seed: 23,
            ..TrainConfig::default()
        };
        let result = train(&spec, params, &ds, &cfg).unwrap();
        let first = result.history[0].train_loss;
        let last = result.history.last().unwrap().train_loss;
        assert!(
            last < first / 10.0,
            "loss only moved from {first} to {last} in 200 epochs"
        );
    }

    #[test]
    fn zero_learning_rate_freezes_parameters_and_losses() {
        let (ds, spec) = tiny_spacetime(2, 25);
        let params = init_params(&spec, 26).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            adam: AdamConfig {
                learning_rate: 0.0,
                ..AdamConfig::default()
            },
            seed: 27,
            ..TrainConfig::default()
        };
        let result = train(&spec, params.clone(), &ds, &cfg).unwrap();
        assert_eq!(result.final_params, params);
        let first = result.history[0];
        for e in &result.history {
            assert_eq!(e.train_loss.to_bits(), first.train_loss.to_bits());
            assert_eq!(e.val_loss.to_bits(), first.val_loss.to_bits());
        }
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let (ds, spec) = tiny_spacetime(4, 29);
        let params = init_params(&spec, 30).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            seed: 31,
            query_batch: Some(10),
            ..TrainConfig::default()
        };
        let a = train(&spec, params.clone(), &ds, &cfg).unwrap();
        let b = train(&spec, params, &ds, &cfg).unwrap();
        assert_eq!(a.history.len(), b.history.len());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.val_loss.to_bits(), y.val_loss.to_bits());
        }
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn nan_parameters_abort_with_diagnostics() {
        let (ds, spec) = tiny_spacetime(1, 33);
        let mut params = init_params(&spec, 34).unwrap();
        params.values[0][0] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 1,
            seed: 35,
            ..TrainConfig::default()
        };
        match train(&spec, params, &ds, &cfg) {
            Err(Error::NonFinite { epoch, batch, .. }) => {
                assert_eq!(epoch, 1);
                assert_eq!(batch, 0);
            }
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn rel_l2_definition() {
        // identical vectors score zero; a zero prediction scores exactly one
        assert_eq!(rel_l2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rel_l2(&[0.0, 0.0, 0.0], &[0.3, -0.4, 1.2]).unwrap(), 1.0);
        assert!(rel_l2(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn zero_model_evaluates_to_unit_relative_error() {
        let (ds, spec) = tiny_spacetime(3, 37);
        let params = zeroed(&init_params(&spec, 2).unwrap());
        let report = evaluate(&spec, &params, &ds, Some(BaselineMethod::IdwScattered)).unwrap();
        assert_eq!(report.n_samples, 3);
        for r in &report.per_sample_rel_l2 {
            assert_eq!(*r, 1.0);
        }
        assert_eq!(report.mean_rel_l2, 1.0);
        assert_eq!(report.median_rel_l2, 1.0);
        assert_eq!(report.max_rel_l2, 1.0);
        let base = report.baseline.expect("baseline requested");
        assert_eq!(base.method, "idw_scattered");
        assert_eq!(base.per_sample_rel_l2.len(), 3);
        assert!(base.mean_rel_l2.is_finite() && base.mean_rel_l2 > 0.0);
    }

    #[test]
    fn bicubic_baseline_rejects_scattered_layouts() {
        let (ds, _) = tiny_spacetime(1, 39);
        let err = baseline_interpolate(&ds.header, &ds.records[0], BaselineMethod::BicubicGrid);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn idw_baseline_covers_gridded_layouts() {
        let mut cfg = DatasetConfig::defaults(Family::Exp1, 1, 41);
        cfg.lr_frames = 4;
        cfg.lr_spatial = vec![6];
        cfg.hr_frames = 6;
        cfg.hr_spatial = vec![9];
        let ds = build_dataset(&cfg).unwrap();
        let rec = &ds.records[0];
        let idw = baseline_interpolate(&ds.header, rec, BaselineMethod::IdwScattered).unwrap();
        assert_eq!(idw.len(), rec.hr_targets.len());
        assert!(idw.iter().all(|v| v.is_finite()));
        let cubic = baseline_interpolate(&ds.header, rec, BaselineMethod::BicubicGrid).unwrap();
        assert_eq!(cubic.len(), rec.hr_targets.len());
        assert!(cubic.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        let bad = TrainConfig {
            lambda_data: 0.0,
            lambda_physics: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            fd_step: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            split: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            query_batch: Some(0),
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn best_validation_parameters_are_retained() {
        let (ds, spec) = tiny_spacetime(4, 43);
        let params = init_params(&spec, 44).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 2,
            split: 0.75,
            seed: 45,
            ..TrainConfig::default()
        };
        let result = train(&spec, params, &ds, &cfg).unwrap();
        assert_eq!(result.history.len(), 5);
        let best = result
            .history
            .iter()
            .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
            .unwrap();
        assert_eq!(result.best_epoch, best.epoch);
        // the retained parameters reproduce exactly the best recorded
        // validation loss
        let val_inputs: Vec<SampleInputs> = ds.records[3..]
            .iter()
            .map(|r| SampleInputs::from_record(&ds.header, r))
            .collect();
        let mut sum = 0.0;
        let mut count = 0;
        for i in &val_inputs {
            let pred = sropnet_eval(&spec, &result.params, i, &i.queries).unwrap();
            for (p, t) in pred.iter().zip(&i.targets) {
                sum += (p - t) * (p - t);
            }
            count += pred.len();
        }
        assert_eq!((sum / count as f64).to_bits(), best.val_loss.to_bits());
    }
}
