//! Classical reference forecasts: seasonal naive, multiplicative
//! Holt-Winters and a history-length dispatch that averages them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DatarowKey, PanelDataset};

pub const GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// `forecast_t = value_(t - period)`, repeating the last observed cycle.
pub fn seasonal_naive(history: &[f64], horizon: usize, period: usize) -> Result<Vec<f64>> {
    if period == 0 || history.len() < period {
        return Err(Error::InsufficientHistory(format!(
            "seasonal naive needs {period} observations, got {}",
            history.len()
        )));
    }
    let last = &history[history.len() - period..];
    Ok((0..horizon).map(|h| last[h % period]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoltWintersParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl HoltWintersParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("holt-winters {name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Level, additive trend and multiplicative seasonal factors. `seasonal[i]`
/// applies to steps whose index is `i` modulo the period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoltWintersState {
    pub level: f64,
    pub trend: f64,
    pub seasonal: Vec<f64>,
    pub params: HoltWintersParams,
}

impl HoltWintersState {
    /// Classical start: level is the first-cycle mean, trend the per-step
    /// change between the first two cycle means, seasonals the first-cycle
    /// ratios to the level.
    pub fn initial(history: &[f64], period: usize, params: HoltWintersParams) -> Result<Self> {
        if period == 0 || history.len() < 2 * period {
            return Err(Error::InsufficientHistory(format!(
                "holt-winters needs {} observations, got {}",
                2 * period,
                history.len()
            )));
        }
        if let Some(v) = history.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!("holt-winters needs positive values, got {v}")));
        }
        params.validate()?;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let first = mean(&history[..period]);
        let second = mean(&history[period..2 * period]);
        Ok(Self {
            level: first,
            trend: (second - first) / period as f64,
            seasonal: history[..period].iter().map(|v| v / first).collect(),
            params,
        })
    }

    pub fn period(&self) -> usize {
        self.seasonal.len()
    }

    /// Forecast of the step with index `step`, one step ahead of the state.
    pub fn one_step(&self, step: usize) -> f64 {
        (self.level + self.trend) * self.seasonal[step % self.period()]
    }

    pub fn update(&mut self, y: f64, step: usize) {
        let HoltWintersParams { alpha, beta, gamma } = self.params;
        let i = step % self.period();
        let s = self.seasonal[i];
        let level = alpha * y / s + (1.0 - alpha) * (self.level + self.trend);
        self.trend = beta * (level - self.level) + (1.0 - beta) * self.trend;
        self.seasonal[i] = gamma * y / level + (1.0 - gamma) * s;
        self.level = level;
    }

    /// Filters `values` whose first element has index `start`, returning the
    /// one-step forecast made before each update.
    pub fn filter(&mut self, values: &[f64], start: usize) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let f = self.one_step(start + i);
                self.update(y, start + i);
                f
            })
            .collect()
    }

    /// `horizon` forecasts from step index `next` on, floored at `floor`.
    pub fn forecast(&self, horizon: usize, next: usize, floor: f64) -> Vec<f64> {
        (1..=horizon)
            .map(|h| {
                let v = (self.level + h as f64 * self.trend) * self.seasonal[(next + h - 1) % self.period()];
                v.max(floor)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoltWintersFit {
    pub state: HoltWintersState,
    /// Mean absolute one-step error after the first cycle.
    pub mae: f64,
}

fn fit_with(history: &[f64], period: usize, params: HoltWintersParams) -> Result<HoltWintersFit> {
    let mut state = HoltWintersState::initial(history, period, params)?;
    let preds = state.filter(&history[period..], period);
    let mae = preds
        .iter()
        .zip(&history[period..])
        .map(|(f, y)| (f - y).abs())
        .sum::<f64>()
        / preds.len() as f64;
    Ok(HoltWintersFit { state, mae })
}

/// Fits with fixed parameters, or the grid point with the lowest one-step
/// MAE (first in alpha, beta, gamma order on ties).
pub fn holt_winters_fit(history: &[f64], period: usize, params: Option<HoltWintersParams>) -> Result<HoltWintersFit> {
    if let Some(p) = params {
        return fit_with(history, period, p);
    }
    let mut best: Option<HoltWintersFit> = None;
    for &alpha in &GRID {
        for &beta in &GRID {
            for &gamma in &GRID {
                let fit = fit_with(history, period, HoltWintersParams { alpha, beta, gamma })?;
                if fit.mae.is_finite() && best.as_ref().is_none_or(|b| fit.mae < b.mae) {
                    best = Some(fit);
                }
            }
        }
    }
    best.ok_or_else(|| Error::Domain("no finite holt-winters fit".into()))
}

pub fn holt_winters_fit_forecast(
    history: &[f64],
    horizon: usize,
    period: usize,
    params: Option<HoltWintersParams>,
) -> Result<Vec<f64>> {
    let fit = holt_winters_fit(history, period, params)?;
    Ok(fit.state.forecast(horizon, history.len(), positivity_floor(history)))
}

fn positivity_floor(history: &[f64]) -> f64 {
    1e-3 * history.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineTier {
    /// Mean of Holt-Winters and seasonal naive.
    Combined,
    SeasonalNaive,
    LastValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub period: usize,
    /// Shortest history routed to the combined tier.
    pub combined_min_history: usize,
    /// Shortest history routed to seasonal naive.
    pub naive_min_history: usize,
    pub params: Option<HoltWintersParams>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            period: 4,
            combined_min_history: 8,
            naive_min_history: 4,
            params: None,
        }
    }
}

impl BaselineConfig {
    pub fn tier(&self, history: usize) -> BaselineTier {
        if history >= self.combined_min_history.max(2 * self.period) {
            BaselineTier::Combined
        } else if history >= self.naive_min_history.max(self.period) {
            BaselineTier::SeasonalNaive
        } else {
            BaselineTier::LastValue
        }
    }
}

/// Forecast of one history according to its tier.
pub fn baseline_row(history: &[f64], horizon: usize, cfg: &BaselineConfig) -> Result<(BaselineTier, Vec<f64>)> {
    let tier = cfg.tier(history.len());
    let values = match tier {
        BaselineTier::Combined => {
            let hw = holt_winters_fit_forecast(history, horizon, cfg.period, cfg.params)?;
            let sn = seasonal_naive(history, horizon, cfg.period)?;
            hw.iter().zip(&sn).map(|(a, b)| 0.5 * (a + b)).collect()
        }
        BaselineTier::SeasonalNaive => seasonal_naive(history, horizon, cfg.period)?,
        BaselineTier::LastValue => {
            let last = *history
                .last()
                .ok_or_else(|| Error::InsufficientHistory("empty history".into()))?;
            vec![last; horizon]
        }
    };
    Ok((tier, values))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaselineForecasts {
    pub forecasts: BTreeMap<DatarowKey, Vec<f64>>,
    pub tiers: BTreeMap<DatarowKey, BaselineTier>,
}

/// Forecasts every row whose history reaches `train_end` for the `horizon`
/// quarters from `train_end`. Other rows are skipped with a warning.
pub fn baseline_forecast(
    panel: &PanelDataset,
    train_end: usize,
    horizon: usize,
    cfg: &BaselineConfig,
) -> Result<BaselineForecasts> {
    let rows: Vec<_> = panel
        .rows()
        .iter()
        .filter(|row| {
            let ok = row.end_quarter() >= train_end && !row.values_before(train_end).is_empty();
            if !ok {
                log::warn!("baseline skips {}: no history up to quarter {train_end}", row.key());
            }
            ok
        })
        .collect();
    let fitted: Vec<_> = rows
        .par_iter()
        .map(|row| baseline_row(row.values_before(train_end), horizon, cfg).map(|r| (row.key().clone(), r)))
        .collect::<Result<_>>()?;
    let mut out = BaselineForecasts::default();
    for (key, (tier, values)) in fitted {
        out.tiers.insert(key.clone(), tier);
        out.forecasts.insert(key, values);
    }
    Ok(out)
}
