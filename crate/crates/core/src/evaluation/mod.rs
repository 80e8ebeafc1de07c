//! MAPE at datarow, segment and world level, revenue-weighted segment
//! averages, improvement over a baseline and signed-error densities.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DatarowKey, PanelDataset};

pub use report::{
    compare, evaluate, write_comparison_csv, write_density_csv, write_report_csv, Comparison, ComparisonRow,
    EvaluationOptions, EvaluationReport, LevelDensity,
};

pub const WORLD: &str = "world";

/// `100 * mean |pred - actual| / |actual|`. Quarters with a zero actual are
/// left out with a warning.
pub fn mape(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::ShapeMismatch(format!(
            "mape: {} forecasts for {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, a) in pred.iter().zip(actual) {
        if *a == 0.0 {
            log::warn!("mape skips a zero actual");
            continue;
        }
        sum += ((p - a) / a).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Domain("mape has no nonzero actuals".into()));
    }
    Ok(100.0 * sum / n as f64)
}

/// Per-quarter signed percent errors `100 * (pred - actual) / actual`.
pub fn signed_percent_errors(pred: &[f64], actual: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != actual.len() {
        return Err(Error::ShapeMismatch("signed errors need equal lengths".into()));
    }
    Ok(pred.iter().zip(actual).map(|(p, a)| 100.0 * (p - a) / a).collect())
}

/// Percent error reduction of `model` relative to `baseline`; `None` when the
/// baseline is zero.
pub fn improvement(baseline: f64, model: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (baseline - model) / baseline * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Segment,
    World,
}

/// Summed forecasts and actuals of one group, per test quarter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupSeries {
    pub forecast: Vec<f64>,
    pub actual: Vec<f64>,
}

/// Actual revenue of `key` for quarters `first_quarter..first_quarter + len`,
/// when all are observed.
pub fn actuals(panel: &PanelDataset, key: &DatarowKey, first_quarter: usize, len: usize) -> Option<Vec<f64>> {
    panel
        .get(key)?
        .values_between(first_quarter, first_quarter + len)
        .map(<[f64]>::to_vec)
}

/// Rows of `forecasts` (restricted to `keys` when given) that have actuals
/// for every forecast quarter.
pub fn evaluable_keys(
    panel: &PanelDataset,
    forecasts: &BTreeMap<DatarowKey, Vec<f64>>,
    first_quarter: usize,
) -> BTreeSet<DatarowKey> {
    forecasts
        .iter()
        .filter(|(k, f)| actuals(panel, k, first_quarter, f.len()).is_some())
        .map(|(k, _)| k.clone())
        .collect()
}

/// Per-quarter sums of forecasts and actuals over the rows in `keys`,
/// grouped by segment or into a single world group.
pub fn aggregate_level(
    forecasts: &BTreeMap<DatarowKey, Vec<f64>>,
    panel: &PanelDataset,
    keys: &BTreeSet<DatarowKey>,
    first_quarter: usize,
    level: Level,
) -> Result<BTreeMap<String, GroupSeries>> {
    let mut groups: BTreeMap<String, GroupSeries> = BTreeMap::new();
    for key in keys {
        let f = forecasts
            .get(key)
            .ok_or_else(|| Error::Validation(format!("no forecast for {key}")))?;
        let a = actuals(panel, key, first_quarter, f.len())
            .ok_or_else(|| Error::Validation(format!("no actuals for {key}")))?;
        let name = match level {
            Level::Segment => key.segment.clone(),
            Level::World => WORLD.to_string(),
        };
        let g = groups.entry(name).or_default();
        if g.forecast.is_empty() {
            g.forecast = vec![0.0; f.len()];
            g.actual = vec![0.0; f.len()];
        }
        if g.forecast.len() != f.len() {
            return Err(Error::ShapeMismatch(format!("{key}: forecast length {}", f.len())));
        }
        g.forecast.iter_mut().zip(f).for_each(|(s, v)| *s += v);
        g.actual.iter_mut().zip(&a).for_each(|(s, v)| *s += v);
    }
    Ok(groups)
}

/// How a group's MAPE is taken over the test quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapeMode {
    /// Mean of per-quarter absolute percent errors.
    #[default]
    PerQuarter,
    /// Absolute percent error of the quarter-summed totals.
    Totals,
}

impl std::str::FromStr for MapeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_quarter" => Ok(MapeMode::PerQuarter),
            "totals" => Ok(MapeMode::Totals),
            other => Err(Error::Config(format!("unknown MAPE mode {other:?}"))),
        }
    }
}

pub fn group_mape(g: &GroupSeries, mode: MapeMode) -> Result<f64> {
    match mode {
        MapeMode::PerQuarter => mape(&g.forecast, &g.actual),
        MapeMode::Totals => mape(&[g.forecast.iter().sum()], &[g.actual.iter().sum()]),
    }
}

/// Segment weights proportional to test-period actual revenue.
pub fn revenue_weights(segments: &BTreeMap<String, GroupSeries>) -> BTreeMap<String, f64> {
    let totals: BTreeMap<&String, f64> = segments.iter().map(|(s, g)| (s, g.actual.iter().sum())).collect();
    let all: f64 = totals.values().sum();
    totals
        .into_iter()
        .map(|(s, t)| (s.clone(), if all > 0.0 { t / all } else { 0.0 }))
        .collect()
}

/// MAPEs at the three reported levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMapes {
    pub segments: BTreeMap<String, f64>,
    pub world: f64,
    pub revenue_weighted_segment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvements {
    pub segments: BTreeMap<String, Option<f64>>,
    pub world: Option<f64>,
    pub revenue_weighted_segment: Option<f64>,
}

pub fn level_mapes(
    forecasts: &BTreeMap<DatarowKey, Vec<f64>>,
    panel: &PanelDataset,
    keys: &BTreeSet<DatarowKey>,
    first_quarter: usize,
    mode: MapeMode,
) -> Result<(LevelMapes, BTreeMap<String, f64>)> {
    let seg = aggregate_level(forecasts, panel, keys, first_quarter, Level::Segment)?;
    let world = aggregate_level(forecasts, panel, keys, first_quarter, Level::World)?;
    let world = world
        .get(WORLD)
        .ok_or_else(|| Error::Validation("no evaluable datarows".into()))?;
    let segments = seg
        .iter()
        .map(|(s, g)| group_mape(g, mode).map(|m| (s.clone(), m)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let weights = revenue_weights(&seg);
    let weighted = segments.iter().map(|(s, m)| weights[s] * m).sum();
    Ok((
        LevelMapes {
            segments,
            world: group_mape(world, mode)?,
            revenue_weighted_segment: weighted,
        },
        weights,
    ))
}

pub fn improvements(baseline: &LevelMapes, model: &LevelMapes) -> Improvements {
    Improvements {
        segments: model
            .segments
            .iter()
            .map(|(s, m)| (s.clone(), baseline.segments.get(s).and_then(|b| improvement(*b, *m))))
            .collect(),
        world: improvement(baseline.world, model.world),
        revenue_weighted_segment: improvement(baseline.revenue_weighted_segment, model.revenue_weighted_segment),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Mean, population standard deviation and histogram of per-run values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub variance: f64,
    pub histogram: Vec<HistogramBin>,
}

pub fn density_summary(values: &[f64], bins: usize) -> Result<DensitySummary> {
    if values.len() < 2 {
        return Err(Error::Validation(format!(
            "density summary needs at least 2 runs, got {}",
            values.len()
        )));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let histogram = if hi == lo {
        vec![HistogramBin {
            lo,
            hi,
            count: values.len(),
        }]
    } else {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                lo: lo + i as f64 * width,
                hi: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
                count,
            })
            .collect()
    };
    Ok(DensitySummary {
        runs: values.len(),
        mean,
        std: variance.sqrt(),
        variance,
        histogram,
    })
}
