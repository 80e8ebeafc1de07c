use std::collections::BTreeMap;

use crate::curriculum::TrainingRevenue;
use crate::error::{Error, Result};
use crate::forecasters::Vocabulary;
use crate::panel::{split_eligibility_at, DatarowKey, EligibilitySplit, PanelDataset};
use crate::preprocess::{
    deseasonalize, forward_transform, inverse_transform, reseasonalize, stl_decompose, Decomposition,
    TransformState,
};

use super::TrainingConfig;

/// One datarow in model space: training quarters only, optionally
/// deseasonalized, then log-transformed and de-meaned.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRow {
    pub key: DatarowKey,
    pub first_quarter: usize,
    /// Values for quarters `first_quarter..train_end`.
    pub series: Vec<f64>,
    pub transform: TransformState,
    pub decomposition: Option<Decomposition>,
    pub covariates: Vec<f64>,
}

impl PreparedRow {
    /// Model-space values for quarters `from..from + len`, when covered.
    pub fn window(&self, from: usize, len: usize) -> Option<&[f64]> {
        let start = from.checked_sub(self.first_quarter)?;
        self.series.get(start..start + len)
    }

    /// Maps model-space forecasts for quarters `first_quarter..` back to
    /// revenue units.
    pub fn to_revenue(&self, forecasts: &[f64], first_quarter: usize) -> Result<Vec<f64>> {
        let values = inverse_transform(forecasts, &self.transform);
        match &self.decomposition {
            Some(d) => reseasonalize(&values, first_quarter, d),
            None => Ok(values),
        }
    }
}

/// Seed-independent inputs shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct PreparedPanel {
    pub train_end: usize,
    pub horizon: usize,
    pub vocabulary: Vocabulary,
    pub split: EligibilitySplit,
    /// Rows that can be forecast; trainable rows are a subset.
    pub rows: BTreeMap<DatarowKey, PreparedRow>,
    /// Rows that cannot be forecast, with the reason.
    pub skipped: BTreeMap<DatarowKey, String>,
    /// STL of trainable rows, present for seasonal and curriculum variants.
    pub decompositions: BTreeMap<DatarowKey, Decomposition>,
    pub revenue: TrainingRevenue,
}

impl PreparedPanel {
    pub fn trainable_rows(&self) -> impl Iterator<Item = &PreparedRow> {
        self.split.trainable.iter().filter_map(|k| self.rows.get(k))
    }
}

pub fn prepare(panel: &PanelDataset, config: &TrainingConfig) -> Result<PreparedPanel> {
    config.validate_for(panel)?;
    let variant = config.variant;
    let train_end = config.resolved_train_end(panel);
    let vocabulary = Vocabulary::from_panel(panel);
    let mut split = split_eligibility_at(panel, train_end, config.min_history);
    let min_forecast_history = if variant.is_lstm() { config.encoder_length() } else { 1 };
    let needs_stl = variant.uses_seasonality() || variant.uses_curriculum();

    let mut rows = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let mut decompositions = BTreeMap::new();
    for row in panel.rows() {
        let key = row.key().clone();
        let history = row.values_before(train_end).len();
        if row.end_quarter() < train_end || history == 0 {
            skipped.insert(key, "no history up to the end of training".to_string());
            continue;
        }
        if history < min_forecast_history {
            skipped.insert(
                key,
                format!("{history} training quarters, model needs {min_forecast_history}"),
            );
            continue;
        }
        let decomposition = if needs_stl && history >= 2 * config.stl.period {
            Some(stl_decompose(row, &config.stl, train_end)?)
        } else {
            None
        };
        if let Some(d) = &decomposition {
            if split.trainable.contains(&key) {
                decompositions.insert(key.clone(), d.clone());
            }
        }
        let model_row = match (&decomposition, variant.uses_seasonality()) {
            (Some(d), true) => deseasonalize(row, d)?,
            (None, true) => {
                skipped.insert(key, format!("{history} training quarters, too short for STL"));
                continue;
            }
            (_, false) => row.clone(),
        };
        let (mut series, transform) = forward_transform(&model_row, train_end)?;
        series.truncate(history);
        let covariates = if variant.uses_covariates() {
            vocabulary.encode(&key)?.one_hot
        } else {
            Vec::new()
        };
        rows.insert(
            key.clone(),
            PreparedRow {
                key,
                first_quarter: row.first_quarter(),
                series,
                transform,
                decomposition: decomposition.filter(|_| variant.uses_seasonality()),
                covariates,
            },
        );
    }
    split.trainable.retain(|k| rows.contains_key(k));
    if split.trainable.is_empty() {
        return Err(Error::Validation(format!(
            "no trainable datarows: none has {} quarters of history ending at quarter {train_end}",
            split.min_history
        )));
    }
    Ok(PreparedPanel {
        train_end,
        horizon: config.horizon,
        vocabulary,
        split,
        rows,
        skipped,
        decompositions,
        revenue: TrainingRevenue::at(panel, train_end),
    })
}
