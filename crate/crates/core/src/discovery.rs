//! Neural factor discovery: pre-train an extractor to mimic a prior
//! indicator, prune the smallest weights, fine-tune under the rank-IC
//! objective, and mine one factor per catalog entry.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{evaluate_source, FactorSource, IcStats, IndicatorFactor};
use crate::ic::{loss_and_grad, IcSample, RankKernelParams};
use crate::indicators::{IndicatorSpec, PriorCatalog};
use crate::market::{DayBatch, Panel, SplitSpec};
use crate::mlp::{backward, forward, MlpConfig, MlpParams, PruneMask};
use crate::num::Real;
use crate::optim::{optimizer_step, AdamState};
use crate::rng::{derive_seed, rng_for};
use crate::tensor::Tensor;

/// Steps with every sampled day degenerate before training aborts.
const COLLAPSE_PATIENCE: usize = 50;
/// Tail share of eligible train days reserved for the pre-training
/// error-rate measurement.
const HOLDOUT_FRACTION: f64 = 0.2;
/// Minimum (ticker, day) pairs a prior must yield to be trainable.
const MIN_TARGETS: usize = 100;
/// Targets below this magnitude are skipped by the relative error rate.
const TARGET_ABS_FLOOR: f64 = 1e-6;
/// Pre-training targets are clamped to these train-set quantiles before
/// normalization, so unbounded indicators cannot dominate the loss.
const TRIM_QUANTILE: f64 = 0.01;

/// Stage lengths and learning rates for the two training phases.
/// `finetune_steps` and `pretrain_epochs` may be zero (identity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub finetune_steps: usize,
    /// Days sampled per fine-tuning step (the loss averages this many
    /// daily ICs).
    pub days_per_step: usize,
    pub finetune_lr: f64,
    /// Forward-return horizon in trading days during fine-tuning.
    pub horizon: usize,
    /// Validation-IC evaluation cadence in steps.
    pub eval_every: usize,
    /// Evaluations without validation improvement before early stop.
    pub patience: usize,
    pub kernel: RankKernelParams,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            pretrain_epochs: 50,
            pretrain_lr: 1e-3,
            pretrain_batch: 256,
            finetune_steps: 500,
            days_per_step: 8,
            finetune_lr: 1e-3,
            horizon: 5,
            eval_every: 10,
            patience: 20,
            kernel: RankKernelParams::default(),
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.pretrain_batch == 0 || self.days_per_step == 0 {
            return bad("batch sizes must be >= 1");
        }
        if self.horizon == 0 || self.eval_every == 0 {
            return bad("horizon and eval_every must be >= 1");
        }
        if self.pretrain_lr <= 0.0 || self.finetune_lr <= 0.0 {
            return bad("learning rates must be > 0");
        }
        self.kernel.validate()
    }
}

/// Where a factor model came from and which data it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Display form of the prior the extractor was pre-trained on.
    pub prior: String,
    pub prune_rate: f64,
    pub seed: u64,
    pub train_range: (usize, usize),
    pub val_range: (usize, usize),
    pub test_range: (usize, usize),
}

/// Per-stage quality numbers, recorded as each stage completes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub pretrain_error_rate: f64,
    /// Test-range IC of the pruned, pre-trained network before any IC
    /// fine-tuning.
    pub pretrain_test_ic: Option<f64>,
    pub train_ic: Option<f64>,
    pub val_ic: Option<f64>,
    pub test_ic: Option<f64>,
    pub loss_trace: Vec<f64>,
}

/// A discovered factor: extractor weights plus the prune mask and the
/// record of how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: Serialize",
    deserialize = "F: DeserializeOwned"
))]
pub struct FactorModel<F> {
    pub config: MlpConfig,
    pub params: MlpParams<F>,
    pub mask: PruneMask<F>,
    pub provenance: Provenance,
    pub metrics: ModelMetrics,
}

impl<F: Real> FactorModel<F> {
    /// Trailing-window length the extractor reads.
    pub fn window(&self) -> usize {
        self.config.input_size / crate::market::Series::ALL.len()
    }

    /// Evaluation-mode factor values for one day's eligible tickers.
    pub fn score_day(&self, panel: &Panel<F>, day: usize) -> Result<(Vec<String>, Vec<F>)> {
        let (names, inputs) = panel.input_batch(day, self.window())?;
        let inputs = inputs.reshape(&[names.len(), self.config.input_size])?;
        let (out, _) = forward(&self.config, &self.params, Some(&self.mask), &inputs, false, 0)?;
        Ok((names, out.data().to_vec()))
    }
}

impl<F: Real> FactorSource<F> for FactorModel<F> {
    fn label(&self) -> String {
        format!("adnn:{}", self.provenance.prior)
    }

    fn values(&self, panel: &Panel<F>, day: usize) -> Result<(Vec<String>, Vec<F>)> {
        self.score_day(panel, day)
    }
}

/// Borrowed view used to score candidate weights during fine-tuning.
struct CandidateView<'a, F> {
    config: &'a MlpConfig,
    params: &'a MlpParams<F>,
    mask: &'a PruneMask<F>,
}

impl<F: Real> FactorSource<F> for CandidateView<'_, F> {
    fn label(&self) -> String {
        "candidate".into()
    }

    fn values(&self, panel: &Panel<F>, day: usize) -> Result<(Vec<String>, Vec<F>)> {
        let n = self.config.input_size / crate::market::Series::ALL.len();
        let (names, inputs) = panel.input_batch(day, n)?;
        let inputs = inputs.reshape(&[names.len(), self.config.input_size])?;
        let (out, _) = forward(self.config, self.params, Some(self.mask), &inputs, false, 0)?;
        Ok((names, out.data().to_vec()))
    }
}

fn nearest_rank_quantile<F: Real>(sorted: &[F], q: f64) -> F {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Supervised pairs for one prior: flattened windows and the prior's value
/// on the same (ticker, day).
struct TargetSet<F> {
    train_x: Vec<Vec<F>>,
    train_y: Vec<F>,
    holdout_x: Vec<Vec<F>>,
    /// Raw (unclamped, unnormalized) holdout targets.
    holdout_y: Vec<F>,
    target_mean: F,
    target_std: F,
}

fn collect_targets<F: Real>(
    source: &dyn FactorSource<F>,
    panel: &Panel<F>,
    train_range: Range<usize>,
    n: usize,
) -> Result<TargetSet<F>> {
    let mut per_day: Vec<Vec<(Vec<F>, F)>> = Vec::new();
    for day in train_range {
        let (names, inputs) = match panel.input_batch(day, n) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let inputs = inputs
            .reshape(&[names.len(), n * crate::market::Series::ALL.len()])
            .expect("window rows are contiguous");
        let (tnames, tvalues) = match source.values(panel, day) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let by_name: std::collections::HashMap<&str, F> = tnames
            .iter()
            .map(String::as_str)
            .zip(tvalues.iter().copied())
            .collect();
        let mut pairs = Vec::new();
        for (i, name) in names.iter().enumerate() {
            if let Some(&y) = by_name.get(name.as_str()) {
                if y.is_finite() {
                    pairs.push((inputs.row(i).to_vec(), y));
                }
            }
        }
        if !pairs.is_empty() {
            per_day.push(pairs);
        }
    }
    let total: usize = per_day.iter().map(Vec::len).sum();
    if total < MIN_TARGETS {
        return Err(Error::TooFewTargets {
            got: total,
            need: MIN_TARGETS,
        });
    }
    // hold out the last fifth of contributing days for the error rate
    let holdout_days = ((per_day.len() as f64 * HOLDOUT_FRACTION).floor() as usize).max(1);
    let cut = per_day.len() - holdout_days;
    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut holdout_x = Vec::new();
    let mut holdout_y = Vec::new();
    for (d, pairs) in per_day.into_iter().enumerate() {
        for (x, y) in pairs {
            if d < cut {
                train_x.push(x);
                train_y.push(y);
            } else {
                holdout_x.push(x);
                holdout_y.push(y);
            }
        }
    }
    let mut sorted = train_y.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = nearest_rank_quantile(&sorted, TRIM_QUANTILE);
    let hi = nearest_rank_quantile(&sorted, 1.0 - TRIM_QUANTILE);
    for y in &mut train_y {
        *y = (*y).max(lo).min(hi);
    }
    let target_mean = crate::num::mean(&train_y);
    let target_std = crate::num::std_dev(&train_y).max(F::cast(crate::market::STD_FLOOR));
    Ok(TargetSet {
        train_x,
        train_y,
        holdout_x,
        holdout_y,
        target_mean,
        target_std,
    })
}

/// Pre-train an extractor to reproduce any factor source by minimizing
/// mean squared error on normalized targets. Returns the trained weights
/// and the relative error rate on a held-out tail of the train range.
pub fn pretrain_on_source<F: Real>(
    config: &MlpConfig,
    source: &dyn FactorSource<F>,
    panel: &Panel<F>,
    train_range: Range<usize>,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(MlpParams<F>, F)> {
    config.validate()?;
    schedule.validate()?;
    let series_count = crate::market::Series::ALL.len();
    if config.input_size % series_count != 0 {
        return Err(Error::InvalidConfig(format!(
            "input_size {} is not a multiple of the {series_count} panel series",
            config.input_size
        )));
    }
    let n = config.input_size / series_count;
    let targets = collect_targets(source, panel, train_range, n)?;
    let mut params = MlpParams::init(config, derive_seed(seed, 0));
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..targets.train_x.len()).collect();
    let mut shuffle_rng = rng_for(seed, 1);
    let dim = config.input_size;
    for _epoch in 0..schedule.pretrain_epochs {
        // Fisher-Yates so each epoch visits pairs in a fresh order
        for i in (1..order.len()).rev() {
            order.swap(i, shuffle_rng.gen_range(0..=i));
        }
        for chunk in order.chunks(schedule.pretrain_batch) {
            let mut flat = Vec::with_capacity(chunk.len() * dim);
            for &i in chunk {
                flat.extend_from_slice(&targets.train_x[i]);
            }
            let x = Tensor::from_vec(&[chunk.len(), dim], flat)?;
            let (out, cache) = forward(config, &params, None, &x, false, 0)?;
            let b = F::cast(chunk.len() as f64);
            let two = F::cast(2.0);
            let mut upstream = Vec::with_capacity(chunk.len());
            for (row, &i) in chunk.iter().enumerate() {
                let y = (targets.train_y[i] - targets.target_mean) / targets.target_std;
                upstream.push(two * (out.get(row, 0) - y) / b);
            }
            let upstream = Tensor::from_vec(&[chunk.len(), 1], upstream)?;
            let (grads, _) = backward(&cache, &upstream);
            optimizer_step(&mut adam, &mut params, &grads, schedule.pretrain_lr, None)?;
        }
    }
    // relative error on raw holdout targets, denormalizing the prediction
    let mut flat = Vec::with_capacity(targets.holdout_x.len() * dim);
    for x in &targets.holdout_x {
        flat.extend_from_slice(x);
    }
    let hx = Tensor::from_vec(&[targets.holdout_x.len(), dim], flat)?;
    let (out, _) = forward(config, &params, None, &hx, false, 0)?;
    let floor = F::cast(TARGET_ABS_FLOOR);
    let mut total = F::zero();
    let mut counted = 0usize;
    for (row, &y) in targets.holdout_y.iter().enumerate() {
        if y.abs() <= floor {
            continue;
        }
        let f = targets.target_mean + targets.target_std * out.get(row, 0);
        total += ((y - f) / y).abs();
        counted += 1;
    }
    let error_rate = if counted == 0 {
        F::zero()
    } else {
        total / F::cast(counted as f64)
    };
    Ok((params, error_rate))
}

/// Pre-train against a catalog indicator (the usual prior).
pub fn pretrain<F: Real>(
    config: &MlpConfig,
    spec: &IndicatorSpec,
    panel: &Panel<F>,
    train_range: Range<usize>,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(MlpParams<F>, F)> {
    spec.validate()?;
    let source = IndicatorFactor { spec: spec.clone() };
    pretrain_on_source(config, &source, panel, train_range, schedule, seed)
}

/// One-shot magnitude pruning: per layer, zero the `rate` fraction of
/// weights with the smallest absolute value, ties broken by lowest flat
/// index. Biases are never pruned.
pub fn prune<F: Real>(params: &MlpParams<F>, rate: f64) -> Result<PruneMask<F>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "prune rate {rate} outside [0, 1)"
        )));
    }
    let mut layers = Vec::with_capacity(params.weights.len());
    for w in &params.weights {
        let len = w.len();
        let zeros = ((len as f64) * rate).round() as usize;
        let mut idx: Vec<usize> = (0..len).collect();
        idx.sort_by(|&a, &b| {
            w.data()[a]
                .abs()
                .partial_cmp(&w.data()[b].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut mask = vec![F::one(); len];
        for &i in &idx[..zeros.min(len)] {
            mask[i] = F::zero();
        }
        layers.push(Tensor::from_vec(w.shape(), mask)?);
    }
    Ok(PruneMask { layers })
}

/// Zero the masked weight entries in place, making the stored params the
/// Hadamard product the mask describes. Selection rather than multiplication
/// so a masked negative weight lands on +0.0, not -0.0.
pub fn apply_mask<F: Real>(params: &mut MlpParams<F>, mask: &PruneMask<F>) {
    for (w, m) in params.weights.iter_mut().zip(&mask.layers) {
        w.zip_mut(m, |x, keep| if keep == F::zero() { F::zero() } else { x });
    }
}

/// Mean daily rank IC of a model's output over a day range.
pub fn evaluate_ic<F: Real>(
    model: &FactorModel<F>,
    panel: &Panel<F>,
    range: Range<usize>,
    horizon: usize,
) -> Result<IcStats<F>> {
    evaluate_source(model, panel, range, model.window(), horizon)
}

/// Mean absolute input gradient over the batch's stocks, reshaped to
/// (series, time) so each cell shows how much one raw input moved the
/// factor.
pub fn saliency<F: Real>(model: &FactorModel<F>, batch: &DayBatch<F>) -> Result<Tensor<F>> {
    let inputs = batch.flat_inputs();
    let (out, cache) = forward(
        &model.config,
        &model.params,
        Some(&model.mask),
        &inputs,
        false,
        0,
    )?;
    let upstream = Tensor::from_vec(&[out.rows(), 1], vec![F::one(); out.rows()])?;
    let (_, dx) = backward(&cache, &upstream);
    let m = F::cast(dx.rows() as f64);
    let n = batch.window();
    let series_count = crate::market::Series::ALL.len();
    let mut map = Tensor::zeros(&[series_count, n]);
    for row in 0..dx.rows() {
        for s in 0..series_count {
            for j in 0..n {
                let v = map.get(s, j) + dx.get(row, s * n + j).abs() / m;
                map.set(s, j, v);
            }
        }
    }
    Ok(map)
}

/// Fine-tune a pruned model by descending the rank-IC loss on randomly
/// sampled day batches; returns the weights with the best validation IC.
pub fn finetune<F: Real>(
    model: &FactorModel<F>,
    panel: &Panel<F>,
    train_range: Range<usize>,
    val_range: Range<usize>,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<FactorModel<F>> {
    schedule.validate()?;
    model.params.validate_shapes(&model.config)?;
    if schedule.finetune_steps == 0 {
        return Ok(model.clone());
    }
    let n = model.window();
    let days = panel.eligible_days(train_range.clone(), n, schedule.horizon);
    if days.is_empty() {
        return Err(Error::NoEligibleDays);
    }
    // cache batches once; fine-tuning revisits days hundreds of times
    let mut batches = Vec::with_capacity(days.len());
    for &day in &days {
        let batch = panel.day_batch(day, n, schedule.horizon)?;
        let flat = batch.flat_inputs();
        batches.push((batch, flat));
    }

    let mut params = model.params.clone();
    apply_mask(&mut params, &model.mask);
    let mut adam = AdamState::new(&params);
    let mut sample_rng = rng_for(seed, 2);
    let mut trace = Vec::with_capacity(schedule.finetune_steps);

    let val_ic_of = |p: &MlpParams<F>| -> Result<F> {
        let view = CandidateView {
            config: &model.config,
            params: p,
            mask: &model.mask,
        };
        Ok(evaluate_source(&view, panel, val_range.clone(), n, schedule.horizon)?.mean_ic)
    };
    let mut best_params = params.clone();
    let mut best_val = val_ic_of(&params)?;
    let mut evals_since_best = 0usize;
    let mut collapsed_streak = 0usize;

    for step in 0..schedule.finetune_steps {
        let take = schedule.days_per_step.min(batches.len());
        let picked = sample(&mut sample_rng, batches.len(), take);
        let total_rows: usize = picked.iter().map(|i| batches[i].0.m()).sum();
        let dim = model.config.input_size;
        let mut flat = Vec::with_capacity(total_rows * dim);
        for i in picked.iter() {
            flat.extend_from_slice(batches[i].1.data());
        }
        let x = Tensor::from_vec(&[total_rows, dim], flat)?;
        let (out, cache) = forward(
            &model.config,
            &params,
            Some(&model.mask),
            &x,
            true,
            derive_seed(seed, 0x8000_0000 | step as u64),
        )?;
        let mut samples = Vec::with_capacity(take);
        let mut offset = 0usize;
        for i in picked.iter() {
            let m = batches[i].0.m();
            let values: Vec<F> = (offset..offset + m).map(|r| out.get(r, 0)).collect();
            samples.push(IcSample {
                factor_values: values,
                factor_returns: batches[i].0.forward_returns.clone(),
            });
            offset += m;
        }
        let (report, grads_per_day) = loss_and_grad(&samples, &schedule.kernel)?;
        trace.push(report.loss.to_f64_lossy());
        if report.degenerate_days == samples.len() {
            collapsed_streak += 1;
            if collapsed_streak >= COLLAPSE_PATIENCE {
                return Err(Error::FactorCollapse { steps: step + 1 });
            }
        } else {
            collapsed_streak = 0;
        }
        let mut upstream = Vec::with_capacity(total_rows);
        for g in &grads_per_day {
            upstream.extend_from_slice(g);
        }
        let upstream = Tensor::from_vec(&[total_rows, 1], upstream)?;
        let (grads, _) = backward(&cache, &upstream);
        optimizer_step(
            &mut adam,
            &mut params,
            &grads,
            schedule.finetune_lr,
            Some(&model.mask),
        )?;

        if (step + 1) % schedule.eval_every == 0 {
            let val = val_ic_of(&params)?;
            if val > best_val {
                best_val = val;
                best_params = params.clone();
                evals_since_best = 0;
            } else {
                evals_since_best += 1;
                if schedule.patience > 0 && evals_since_best >= schedule.patience {
                    break;
                }
            }
        }
    }

    let mut tuned = model.clone();
    tuned.params = best_params;
    tuned.metrics.val_ic = Some(best_val.to_f64_lossy());
    tuned.metrics.loss_trace = trace;
    Ok(tuned)
}

/// One failed catalog entry, reported without aborting the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MineFailure {
    pub prior: String,
    pub error: String,
}

/// Result of mining a catalog: the surviving models plus any per-entry
/// failures.
#[derive(Debug, Clone)]
pub struct MineReport<F> {
    pub models: Vec<FactorModel<F>>,
    pub failures: Vec<MineFailure>,
}

fn mine_entry<F: Real>(
    spec: &IndicatorSpec,
    panel: &Panel<F>,
    ranges: &(Range<usize>, Range<usize>, Range<usize>),
    config: &MlpConfig,
    schedule: &TrainSchedule,
    prune_rate: f64,
    entry_seed: u64,
) -> Result<FactorModel<F>> {
    spec.validate()?;
    let source = IndicatorFactor { spec: spec.clone() };
    mine_source(&source, panel, ranges, config, schedule, prune_rate, entry_seed)
}

/// Full discovery pass for one prior source: pre-train the extractor on the
/// source's values, prune, then fine-tune on the rank-IC loss. Works for any
/// factor source, so a GP expression can seed the network the same way an
/// indicator does.
pub fn mine_source<F: Real>(
    source: &dyn FactorSource<F>,
    panel: &Panel<F>,
    ranges: &(Range<usize>, Range<usize>, Range<usize>),
    config: &MlpConfig,
    schedule: &TrainSchedule,
    prune_rate: f64,
    entry_seed: u64,
) -> Result<FactorModel<F>> {
    let (train, val, test) = ranges;
    let (mut params, error_rate) =
        pretrain_on_source(config, source, panel, train.clone(), schedule, entry_seed)?;
    let mask = prune(&params, prune_rate)?;
    apply_mask(&mut params, &mask);
    let mut model = FactorModel {
        config: *config,
        params,
        mask,
        provenance: Provenance {
            prior: source.label(),
            prune_rate,
            seed: entry_seed,
            train_range: (train.start, train.end),
            val_range: (val.start, val.end),
            test_range: (test.start, test.end),
        },
        metrics: ModelMetrics {
            pretrain_error_rate: error_rate.to_f64_lossy(),
            ..ModelMetrics::default()
        },
    };
    model.metrics.pretrain_test_ic = Some(
        evaluate_ic(&model, panel, test.clone(), schedule.horizon)?
            .mean_ic
            .to_f64_lossy(),
    );
    let mut tuned = finetune(&model, panel, train.clone(), val.clone(), schedule, entry_seed)?;
    tuned.metrics.train_ic = Some(
        evaluate_ic(&tuned, panel, train.clone(), schedule.horizon)?
            .mean_ic
            .to_f64_lossy(),
    );
    tuned.metrics.test_ic = Some(
        evaluate_ic(&tuned, panel, test.clone(), schedule.horizon)?
            .mean_ic
            .to_f64_lossy(),
    );
    Ok(tuned)
}

/// Mine one factor per catalog entry. Entries run independently (rayon
/// parallel) with per-entry derived seeds, so results do not depend on
/// scheduling; failed entries are reported and skipped.
pub fn mine<F: Real>(
    catalog: &PriorCatalog,
    panel: &Panel<F>,
    split: SplitSpec,
    config: &MlpConfig,
    schedule: &TrainSchedule,
    prune_rate: f64,
    seed: u64,
) -> Result<MineReport<F>> {
    catalog.validate()?;
    if catalog.entries.is_empty() {
        return Err(Error::EmptyPool("prior catalog".into()));
    }
    let ranges = panel.split(split)?;
    let results: Vec<(String, Result<FactorModel<F>>)> = catalog
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let entry_seed = derive_seed(seed, i as u64);
            (
                spec.to_string(),
                mine_entry(spec, panel, &ranges, config, schedule, prune_rate, entry_seed),
            )
        })
        .collect();
    let mut report = MineReport {
        models: Vec::new(),
        failures: Vec::new(),
    };
    for (prior, result) in results {
        match result {
            Ok(model) => report.models.push(model),
            Err(e) => report.failures.push(MineFailure {
                prior,
                error: e.to_string(),
            }),
        }
    }
    Ok(report)
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: Serialize",
    deserialize = "F: DeserializeOwned"
))]
struct ModelFile<F> {
    version: u32,
    model: FactorModel<F>,
}

pub fn save_model<F: Real + Serialize>(model: &FactorModel<F>, path: &Path) -> Result<()> {
    let file = ModelFile {
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::ModelFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    fs::write(path, json).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model<F: Real + DeserializeOwned>(path: &Path) -> Result<FactorModel<F>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ModelFile<F> = serde_json::from_str(&text).map_err(|e| Error::ModelFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFile {
            path: path.display().to_string(),
            reason: format!(
                "format version {} unsupported (expected {MODEL_FORMAT_VERSION})",
                file.version
            ),
        });
    }
    file.model.params.validate_shapes(&file.model.config)?;
    Ok(file.model)
}
