//! Additive STL (seasonal-trend decomposition by Loess) without the
//! robustness outer loop.

use serde::{Deserialize, Serialize};

use super::loess::{loess_at, loess_smooth};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalMode {
    /// Cycle-subseries smoother is the subseries mean; the seasonal pattern
    /// repeats exactly every period.
    #[default]
    Periodic,
    /// Cycle-subseries smoothed by local linear Loess.
    Loess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StlConfig {
    pub period: usize,
    pub mode: SeasonalMode,
    pub seasonal_span: usize,
    pub trend_span: usize,
    /// Defaults to the smallest odd integer >= period.
    pub low_pass_span: Option<usize>,
    pub inner_iterations: usize,
}

pub const QUARTERLY_PERIOD: usize = 4;

impl Default for StlConfig {
    fn default() -> Self {
        let period = QUARTERLY_PERIOD;
        Self {
            period,
            mode: SeasonalMode::Periodic,
            seasonal_span: 7,
            trend_span: default_trend_span(period, 7),
            low_pass_span: None,
            inner_iterations: 2,
        }
    }
}

/// Smallest odd integer >= 1.5 * period / (1 - 1.5 / seasonal_span).
pub fn default_trend_span(period: usize, seasonal_span: usize) -> usize {
    let raw = 1.5 * period as f64 / (1.0 - 1.5 / seasonal_span as f64);
    let mut span = raw.ceil() as usize;
    if span % 2 == 0 {
        span += 1;
    }
    span
}

impl StlConfig {
    fn low_pass(&self) -> usize {
        self.low_pass_span
            .unwrap_or(if self.period % 2 == 0 { self.period + 1 } else { self.period })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlComponents<T> {
    pub trend: Vec<T>,
    pub seasonal: Vec<T>,
    pub remainder: Vec<T>,
}

fn moving_average<T: Scalar>(x: &[T], width: usize) -> Vec<T> {
    let w = T::lit(width as f64);
    x.windows(width)
        .map(|win| win.iter().copied().sum::<T>() / w)
        .collect()
}

/// Decomposes `y = trend + seasonal + remainder`. `phase` is the cycle
/// position of `y[0]`, so seasonal positions follow `(phase + t) % period`.
pub fn stl_additive<T: Scalar>(y: &[T], phase: usize, cfg: &StlConfig) -> Result<StlComponents<T>> {
    let n = y.len();
    let p = cfg.period;
    if p < 2 {
        return Err(Error::Config(format!("STL period {p} must be >= 2")));
    }
    if n < 2 * p {
        return Err(Error::InsufficientHistory(format!(
            "STL needs at least {} observations, got {n}",
            2 * p
        )));
    }
    let cycle = |t: i64| (phase as i64 + t).rem_euclid(p as i64) as usize;
    let mut trend = vec![T::zero(); n];
    let mut seasonal = vec![T::zero(); n];
    let mut extended = vec![T::zero(); n + 2 * p];

    for _ in 0..cfg.inner_iterations.max(1) {
        let detrended: Vec<T> = y.iter().zip(&trend).map(|(a, b)| *a - *b).collect();
        for start in 0..p {
            let sub: Vec<T> = detrended.iter().skip(start).step_by(p).copied().collect();
            let m = sub.len();
            let smoothed: Vec<T> = match cfg.mode {
                SeasonalMode::Periodic => {
                    let mean = sub.iter().copied().sum::<T>() / T::lit(m as f64);
                    vec![mean; m + 2]
                }
                SeasonalMode::Loess => (-1..=m as i64)
                    .map(|x| loess_at(&sub, x as f64, cfg.seasonal_span, 1).unwrap_or(T::zero()))
                    .collect(),
            };
            // smoothed[j] sits at time start + (j - 1) * p, offset by p in `extended`.
            for (j, v) in smoothed.into_iter().enumerate() {
                extended[start + j * p] = v;
            }
        }
        let low = moving_average(&moving_average(&moving_average(&extended, p), p), 3);
        let low = loess_smooth(&low, cfg.low_pass(), 1);
        for t in 0..n {
            seasonal[t] = extended[t + p] - low[t];
        }
        let deseasonal: Vec<T> = y.iter().zip(&seasonal).map(|(a, b)| *a - *b).collect();
        trend = loess_smooth(&deseasonal, cfg.trend_span, 1);
    }

    if cfg.mode == SeasonalMode::Periodic {
        let mut sums = vec![T::zero(); p];
        let mut counts = vec![0usize; p];
        for (t, s) in seasonal.iter().enumerate() {
            let c = cycle(t as i64);
            sums[c] += *s;
            counts[c] += 1;
        }
        let means: Vec<T> = sums
            .iter()
            .zip(&counts)
            .map(|(s, c)| *s / T::lit(*c as f64))
            .collect();
        let centre = means.iter().copied().sum::<T>() / T::lit(p as f64);
        for (t, s) in seasonal.iter_mut().enumerate() {
            *s = means[cycle(t as i64)] - centre;
        }
        trend.iter_mut().for_each(|v| *v += centre);
    }

    let remainder = y
        .iter()
        .zip(&trend)
        .zip(&seasonal)
        .map(|((v, t), s)| *v - *t - *s)
        .collect();
    Ok(StlComponents {
        trend,
        seasonal,
        remainder,
    })
}
