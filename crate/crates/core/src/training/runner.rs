use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curriculum::{build_plan, score_datarows, CurriculumPlan};
use crate::error::{Error, Result};
use crate::forecasters::{DcnnExample, DcnnForecaster, LstmExample, LstmForecaster, Vocabulary};
use crate::nn::{Checkpoint, ModelState, ParameterSet};
use crate::panel::{DatarowKey, PanelDataset};
use crate::rng::Rng;

use super::prepare::{prepare, PreparedPanel, PreparedRow};
use super::{window_offsets, ModelVariant, TrainingConfig};

/// The quarters one training example reads, inputs and targets together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleProvenance {
    pub key: DatarowKey,
    pub first_quarter: usize,
    /// Exclusive.
    pub end_quarter: usize,
}

/// Hooks into the training loop. All methods default to no-ops.
pub trait TrainingObserver {
    fn window_start(&mut self, _window: usize, _offset: usize, _params: &ParameterSet<f64>) {}
    fn window_end(&mut self, _window: usize, _params: &ParameterSet<f64>) {}
    /// Called before every weight update with the examples that feed it.
    fn update(&mut self, _window: usize, _examples: &[&ExampleProvenance]) {}
}

pub struct NoObserver;

impl TrainingObserver for NoObserver {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub window: usize,
    /// Curriculum stage, 1-based; always 1 without a curriculum.
    pub stage: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    /// Revenue-unit forecasts for quarters `train_end..train_end + horizon`.
    pub forecasts: BTreeMap<DatarowKey, Vec<f64>>,
    pub loss_trace: Vec<LossPoint>,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: TrainingConfig,
    pub config_hash: String,
    pub train_end: usize,
    pub horizon: usize,
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
    pub skipped: BTreeMap<DatarowKey, String>,
    pub trainable: usize,
    pub out_of_sample: usize,
}

/// Model metadata stored alongside checkpoint parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointModel {
    pub config: TrainingConfig,
    pub vocabulary: Vocabulary,
    pub run: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Forecaster {
    Lstm(LstmForecaster<f64>),
    Dcnn(DcnnForecaster<f64>),
}

impl Forecaster {
    pub fn new(config: &TrainingConfig, covariate_size: usize, seed: u64) -> Result<Self> {
        Ok(if config.variant.is_lstm() {
            Forecaster::Lstm(LstmForecaster::new(config.lstm_config(covariate_size), config.adam, seed)?)
        } else {
            Forecaster::Dcnn(DcnnForecaster::new(config.dcnn_config(covariate_size), config.adam, seed)?)
        })
    }

    pub fn state(&self) -> &ModelState<f64> {
        match self {
            Forecaster::Lstm(m) => m.state(),
            Forecaster::Dcnn(m) => m.state(),
        }
    }

    pub fn state_mut(&mut self) -> &mut ModelState<f64> {
        match self {
            Forecaster::Lstm(m) => m.state_mut(),
            Forecaster::Dcnn(m) => m.state_mut(),
        }
    }

    pub fn params(&self) -> &ParameterSet<f64> {
        &self.state().params
    }

    /// Model-space forecast for the `horizon` quarters after `row`'s history.
    pub fn forecast_row(&self, row: &PreparedRow, horizon: usize) -> Result<Vec<f64>> {
        let cov = (!row.covariates.is_empty()).then_some(row.covariates.as_slice());
        match self {
            Forecaster::Lstm(m) => m.forecast(&row.series, cov, horizon),
            Forecaster::Dcnn(m) => m.forecast(&row.series, cov, horizon),
        }
    }
}

fn covariates(row: &PreparedRow) -> Option<Vec<f64>> {
    (!row.covariates.is_empty()).then(|| row.covariates.clone())
}

fn curriculum_plan(prepared: &PreparedPanel, config: &TrainingConfig, seed: u64) -> Result<CurriculumPlan> {
    let cfg = config.curriculum();
    let scores = score_datarows(
        prepared.split.trainable.iter(),
        &prepared.decompositions,
        cfg.weighting,
        &prepared.revenue,
    )?;
    build_plan(&scores, Some(&prepared.revenue.by_row), &cfg, seed)
}

/// Per-epoch lists of example indices: the curriculum stage sets in plan
/// order, or one shuffled set of everything.
struct Schedule {
    /// `(stage, epoch, example order)` in training order.
    epochs: Vec<(usize, usize, Vec<usize>)>,
}

fn schedule(
    keys: &[DatarowKey],
    plan: Option<&CurriculumPlan>,
    window: usize,
    epochs: usize,
    rng: &mut Rng,
) -> Result<Schedule> {
    let index: BTreeMap<&DatarowKey, usize> = keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut out = Vec::new();
    match plan {
        Some(plan) => {
            for stage in 1..=plan.stages() {
                for epoch in 0..plan.config().epochs_per_stage {
                    let order = plan
                        .epoch_order(window, stage, epoch)?
                        .iter()
                        .filter_map(|k| index.get(k).copied())
                        .collect();
                    out.push((stage, epoch, order));
                }
            }
        }
        None => {
            for epoch in 0..epochs {
                let mut order: Vec<usize> = (0..keys.len()).collect();
                rng.shuffle(&mut order);
                out.push((1, epoch, order));
            }
        }
    }
    Ok(Schedule { epochs: out })
}

/// Runs the scheduled epochs with minibatches of `batch_size`.
fn run_epochs<E>(
    window: usize,
    examples: &[E],
    provenance: &[ExampleProvenance],
    schedule: Schedule,
    batch_size: usize,
    observer: &mut dyn TrainingObserver,
    mut step: impl FnMut(&[E]) -> Result<(f64, usize)>,
    trace: &mut Vec<LossPoint>,
) -> Result<()>
where
    E: Clone,
{
    for (stage, epoch, order) in schedule.epochs {
        if order.is_empty() {
            continue;
        }
        let mut total = 0.0;
        let mut weight = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<E> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let prov: Vec<&ExampleProvenance> = chunk.iter().map(|&i| &provenance[i]).collect();
            observer.update(window, &prov);
            let (loss, n) = step(&batch)?;
            total += loss * n as f64;
            weight += n;
        }
        trace.push(LossPoint {
            window,
            stage,
            epoch,
            loss: total / weight.max(1) as f64,
        });
    }
    Ok(())
}

fn train_lstm(
    model: &mut LstmForecaster<f64>,
    prepared: &PreparedPanel,
    config: &TrainingConfig,
    plan: Option<&CurriculumPlan>,
    rng: &mut Rng,
    observer: &mut dyn TrainingObserver,
) -> Result<Vec<LossPoint>> {
    let mut trace = Vec::new();
    let encoder = config.encoder_length();
    let window_size = config.window_size;
    for (window, offset) in window_offsets(prepared.train_end, window_size).enumerate() {
        observer.window_start(window, offset, &model.state().params);
        let mut keys = Vec::new();
        let mut examples = Vec::new();
        let mut provenance = Vec::new();
        for row in prepared.trainable_rows() {
            let Some(values) = row.window(offset, window_size) else {
                continue;
            };
            keys.push(row.key.clone());
            examples.push(LstmExample {
                encoder_inputs: values[..encoder].to_vec(),
                targets: values[encoder..].to_vec(),
                covariates: covariates(row),
            });
            provenance.push(ExampleProvenance {
                key: row.key.clone(),
                first_quarter: offset,
                end_quarter: offset + window_size,
            });
        }
        let sched = schedule(&keys, plan, window, config.epochs_per_window, rng)?;
        run_epochs(
            window,
            &examples,
            &provenance,
            sched,
            config.batch_size,
            observer,
            |batch| model.train_step(batch).map(|l| (l, batch.len())),
            &mut trace,
        )?;
        observer.window_end(window, &model.state().params);
    }
    Ok(trace)
}

fn train_dcnn(
    model: &mut DcnnForecaster<f64>,
    prepared: &PreparedPanel,
    config: &TrainingConfig,
    plan: Option<&CurriculumPlan>,
    rng: &mut Rng,
    observer: &mut dyn TrainingObserver,
) -> Result<Vec<LossPoint>> {
    let mut trace = Vec::new();
    let mut keys = Vec::new();
    let mut examples = Vec::new();
    let mut provenance = Vec::new();
    for row in prepared.trainable_rows() {
        let n = row.series.len();
        if n < 2 {
            continue;
        }
        keys.push(row.key.clone());
        // every position predicts its successor
        examples.push(DcnnExample {
            inputs: row.series[..n - 1].to_vec(),
            targets: row.series[1..].to_vec(),
            covariates: covariates(row),
        });
        provenance.push(ExampleProvenance {
            key: row.key.clone(),
            first_quarter: row.first_quarter,
            end_quarter: row.first_quarter + n,
        });
    }
    observer.window_start(0, 0, &model.state().params);
    let sched = schedule(&keys, plan, 0, config.epochs_per_window, rng)?;
    run_epochs(
        0,
        &examples,
        &provenance,
        sched,
        config.batch_size,
        observer,
        |batch| {
            let n: usize = batch.iter().map(|e| e.targets.len()).sum();
            model.train_step(batch).map(|l| (l, n))
        },
        &mut trace,
    )?;
    observer.window_end(0, &model.state().params);
    Ok(trace)
}

/// Model-space training followed by revenue-unit forecasts for every
/// forecastable row.
pub fn train_run(
    prepared: &PreparedPanel,
    config: &TrainingConfig,
    run: usize,
    observer: &mut dyn TrainingObserver,
) -> Result<RunResult> {
    let seed = config.run_seed(run);
    let root = Rng::new(seed);
    let init_seed = root.derive(1).next_u64();
    let mut shuffle_rng = root.derive(2);
    let plan = if config.variant.uses_curriculum() {
        Some(curriculum_plan(prepared, config, root.derive(3).next_u64())?)
    } else {
        None
    };
    let mut model = Forecaster::new(config, prepared.vocabulary.len(), init_seed)?;
    let loss_trace = match &mut model {
        Forecaster::Lstm(m) => train_lstm(m, prepared, config, plan.as_ref(), &mut shuffle_rng, observer)?,
        Forecaster::Dcnn(m) => train_dcnn(m, prepared, config, plan.as_ref(), &mut shuffle_rng, observer)?,
    };
    let forecasts = forecast_rows(&model, prepared)?;
    let meta = CheckpointModel {
        config: config.clone(),
        vocabulary: prepared.vocabulary.clone(),
        run,
        seed,
    };
    let checkpoint = model
        .state()
        .to_checkpoint(&config.hash(), serde_json::to_value(&meta)?);
    Ok(RunResult {
        run,
        seed,
        forecasts,
        loss_trace,
        checkpoint,
    })
}

/// Revenue-unit forecasts for every prepared row.
pub fn forecast_rows(model: &Forecaster, prepared: &PreparedPanel) -> Result<BTreeMap<DatarowKey, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for (key, row) in &prepared.rows {
        let raw = model.forecast_row(row, prepared.horizon)?;
        let revenue = row.to_revenue(&raw, prepared.train_end)?;
        if let Some(v) = revenue.iter().find(|v| !v.is_finite()) {
            return Err(Error::Training(format!("non-finite forecast {v} for {key}")));
        }
        out.insert(key.clone(), revenue);
    }
    Ok(out)
}

/// Rebuilds a trained model from a checkpoint and forecasts `panel`.
pub fn forecast_from_checkpoint(
    panel: &PanelDataset,
    checkpoint: &Checkpoint,
) -> Result<(BTreeMap<DatarowKey, Vec<f64>>, BTreeMap<DatarowKey, String>)> {
    let meta: CheckpointModel = serde_json::from_value(checkpoint.model.clone())?;
    if meta.config.hash() != checkpoint.config_hash {
        return Err(Error::Validation(format!(
            "checkpoint config hash {} does not match its stored config",
            checkpoint.config_hash
        )));
    }
    let prepared = prepare(panel, &meta.config)?;
    if prepared.vocabulary != meta.vocabulary {
        return Err(Error::Validation(
            "panel labels differ from the vocabulary the model was trained with".into(),
        ));
    }
    let mut model = Forecaster::new(&meta.config, meta.vocabulary.len(), 0)?;
    model.state_mut().load_checkpoint(checkpoint)?;
    Ok((forecast_rows(&model, &prepared)?, prepared.skipped))
}

/// Trains `config.runs` independent runs with seeds `seed_base + i`, up to
/// `config.parallel` at a time. Failed runs are logged and reported
/// separately.
pub fn run_experiment(panel: &PanelDataset, config: &TrainingConfig) -> Result<ExperimentOutcome> {
    let prepared = prepare(panel, config)?;
    for (key, reason) in &prepared.skipped {
        log::info!("{key} is not forecast: {reason}");
    }
    log::info!(
        "{}: {} trainable, {} out-of-sample, {} unforecastable datarows; {} runs",
        config.variant,
        prepared.split.trainable.len(),
        prepared.split.out_of_sample.len(),
        prepared.skipped.len(),
        config.runs
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} worker threads: {e}", config.parallel)))?;
    let outcomes: Vec<Result<RunResult>> = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|run| {
                let r = train_run(&prepared, config, run, &mut NoObserver);
                match &r {
                    Ok(_) => log::debug!("{} run {run} finished", config.variant),
                    Err(e) => log::warn!("{} run {run} failed and is excluded: {e}", config.variant),
                }
                r
            })
            .collect()
    });
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (run, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push(RunFailure {
                run,
                seed: config.run_seed(run),
                error: e.to_string(),
            }),
        }
    }
    Ok(ExperimentOutcome {
        config: config.clone(),
        config_hash: config.hash(),
        train_end: prepared.train_end,
        horizon: prepared.horizon,
        results,
        failures,
        skipped: prepared.skipped,
        trainable: prepared.split.trainable.len(),
        out_of_sample: prepared.split.out_of_sample.len(),
    })
}

/// Per-row, per-quarter mean over runs.
pub fn aggregate_runs<'a>(
    runs: impl IntoIterator<Item = &'a BTreeMap<DatarowKey, Vec<f64>>>,
) -> Result<BTreeMap<DatarowKey, Vec<f64>>> {
    let mut sums: BTreeMap<DatarowKey, (Vec<f64>, usize)> = BTreeMap::new();
    let mut n_runs = 0usize;
    for run in runs {
        n_runs += 1;
        for (key, values) in run {
            let entry = sums
                .entry(key.clone())
                .or_insert_with(|| (vec![0.0; values.len()], 0));
            if entry.0.len() != values.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{key}: runs disagree on forecast length ({} vs {})",
                    entry.0.len(),
                    values.len()
                )));
            }
            entry.0.iter_mut().zip(values).for_each(|(s, v)| *s += v);
            entry.1 += 1;
        }
    }
    if n_runs == 0 {
        return Err(Error::Training("no successful runs to aggregate".into()));
    }
    Ok(sums
        .into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|v| v / n as f64).collect()))
        .collect())
}

impl ExperimentOutcome {
    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    /// Run-mean forecasts over the successful runs.
    pub fn mean_forecasts(&self) -> Result<BTreeMap<DatarowKey, Vec<f64>>> {
        aggregate_runs(self.results.iter().map(|r| &r.forecasts))
    }
}
