//! Reversible per-datarow transforms and multiplicative seasonal
//! decomposition.

mod loess;
mod stl;
mod transform;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Datarow, DatarowKey, Quarter};

pub use loess::{loess_at, loess_smooth};
pub use stl::{default_trend_span, stl_additive, SeasonalMode, StlComponents, StlConfig, QUARTERLY_PERIOD};
pub use transform::{exp_remean, forward_transform, inverse_transform, log_demean, TransformState};

/// Multiplicative trend, seasonal and residual factors of one datarow over
/// its training quarters `first_quarter..fitted_end()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub key: DatarowKey,
    pub first_quarter: usize,
    pub period: usize,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
}

impl Decomposition {
    pub fn fitted_end(&self) -> usize {
        self.first_quarter + self.trend.len()
    }

    /// Seasonal factor for `quarter`; quarters past the fitted range repeat
    /// the last fitted cycle.
    pub fn seasonal_at(&self, quarter: usize) -> Option<f64> {
        if quarter < self.first_quarter {
            return None;
        }
        let end = self.fitted_end();
        let q = if quarter < end {
            quarter
        } else {
            quarter - self.period * ((quarter - end) / self.period + 1)
        };
        self.seasonal.get(q.checked_sub(self.first_quarter)?).copied()
    }
}

/// Multiplicative STL of the quarters before `train_end`: additive STL on
/// log revenue, components exponentiated.
pub fn stl_decompose(row: &Datarow, cfg: &StlConfig, train_end: usize) -> Result<Decomposition> {
    let history = row.values_before(train_end);
    if history.len() < 2 * cfg.period {
        return Err(Error::InsufficientHistory(format!(
            "{}: STL needs {} quarters before quarter {train_end}, found {}",
            row.key(),
            2 * cfg.period,
            history.len()
        )));
    }
    let logs: Vec<f64> = history.iter().map(|v| v.ln()).collect();
    let phase = row.first_quarter() % cfg.period;
    let c = stl_additive(&logs, phase, cfg)?;
    let exp = |v: Vec<f64>| v.into_iter().map(f64::exp).collect::<Vec<_>>();
    Ok(Decomposition {
        key: row.key().clone(),
        first_quarter: row.first_quarter(),
        period: cfg.period,
        trend: exp(c.trend),
        seasonal: exp(c.seasonal),
        residual: exp(c.remainder),
    })
}

/// Divides every observation by its seasonal factor, leaving trend x residual.
pub fn deseasonalize(row: &Datarow, d: &Decomposition) -> Result<Datarow> {
    let values = row
        .iter()
        .map(|(q, v)| {
            d.seasonal_at(q).map(|s| v / s).ok_or_else(|| {
                Error::Validation(format!("{}: no seasonal factor for quarter {q}", row.key()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Datarow::new(row.key().clone(), row.first_quarter(), values)
}

/// Inverse of [`deseasonalize`] over a row's quarters.
pub fn reseasonalize_row(row: &Datarow, d: &Decomposition) -> Result<Datarow> {
    let values = row
        .iter()
        .map(|(q, v)| {
            d.seasonal_at(q).map(|s| v * s).ok_or_else(|| {
                Error::Validation(format!("{}: no seasonal factor for quarter {q}", row.key()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Datarow::new(row.key().clone(), row.first_quarter(), values)
}

/// Multiplies forecasts for quarters `first_quarter..` by the seasonal
/// factor of the same quarter one period earlier.
pub fn reseasonalize(forecasts: &[f64], first_quarter: usize, d: &Decomposition) -> Result<Vec<f64>> {
    forecasts
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let q = first_quarter + i;
            q.checked_sub(d.period)
                .and_then(|prior| d.seasonal_at(prior))
                .map(|s| f * s)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "{}: no prior-year seasonal factor for quarter {q}",
                        d.key
                    ))
                })
        })
        .collect()
}

/// Root-mean-square deviation of the residual factors from 1.
pub fn residual_score(d: &Decomposition) -> f64 {
    if d.residual.is_empty() {
        return 0.0;
    }
    let ss: f64 = d.residual.iter().map(|r| (r - 1.0).powi(2)).sum();
    (ss / d.residual.len() as f64).sqrt()
}

/// Writes `segment,region,product,quarter,trend,seasonal,residual` rows.
pub fn write_decompositions<'a, W: Write>(
    decomps: impl IntoIterator<Item = &'a Decomposition>,
    epoch: Quarter,
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["segment", "region", "product", "quarter", "trend", "seasonal", "residual"])?;
    for d in decomps {
        for i in 0..d.trend.len() {
            wtr.write_record([
                d.key.segment.clone(),
                d.key.region.clone(),
                d.key.product.clone(),
                epoch.plus(d.first_quarter + i).to_string(),
                d.trend[i].to_string(),
                d.seasonal[i].to_string(),
                d.residual[i].to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<decomposition writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(first: usize, values: Vec<f64>) -> Datarow {
        Datarow::new(DatarowKey::new("s", "r", "p").unwrap(), first, values).unwrap()
    }

    fn known_factors() -> [f64; 4] {
        let raw = [0.8, 1.1, 0.9, 1.25 / 0.792];
        let g = raw.iter().map(|v: &f64| v.ln()).sum::<f64>() / 4.0;
        raw.map(|v| v / g.exp())
    }

    #[test]
    fn recovers_known_seasonal_factors() {
        let s = known_factors();
        let r = row(0, (0..32).map(|t| 10.0 * s[t % 4]).collect());
        for mode in [SeasonalMode::Periodic, SeasonalMode::Loess] {
            let cfg = StlConfig { mode, ..StlConfig::default() };
            let d = stl_decompose(&r, &cfg, 32).unwrap();
            for t in 0..32 {
                assert!((d.seasonal[t] / s[t % 4] - 1.0).abs() < 1e-3, "{mode:?} t={t}");
                assert!((d.residual[t] - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn constant_series() {
        let d = stl_decompose(&row(0, vec![42.0; 20]), &StlConfig::default(), 20).unwrap();
        for t in 0..20 {
            assert!((d.seasonal[t] - 1.0).abs() < 1e-6);
            assert!((d.residual[t] - 1.0).abs() < 1e-6);
            assert!((d.trend[t] - 42.0).abs() < 1e-6 * 42.0);
        }
        assert!(residual_score(&d) < 1e-9);
    }

    #[test]
    fn five_quarters_is_too_short() {
        let err = stl_decompose(&row(0, vec![1.0; 5]), &StlConfig::default(), 5).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory(_)));
    }

    #[test]
    fn only_training_quarters_are_fitted() {
        let d = stl_decompose(&row(2, vec![3.0; 20]), &StlConfig::default(), 14).unwrap();
        assert_eq!(d.fitted_end(), 14);
        assert_eq!(d.trend.len(), 12);
    }

    fn decomp_with_cycle(cycle: [f64; 4]) -> Decomposition {
        Decomposition {
            key: DatarowKey::new("s", "r", "p").unwrap(),
            first_quarter: 0,
            period: 4,
            trend: vec![1.0; 8],
            seasonal: (0..8).map(|t| cycle[t % 4]).collect(),
            residual: vec![1.0; 8],
        }
    }

    #[test]
    fn seasonal_factors_extend_by_repeating_last_cycle() {
        let d = decomp_with_cycle([0.5, 1.0, 1.5, 2.0]);
        assert_eq!(d.seasonal_at(8), Some(0.5));
        assert_eq!(d.seasonal_at(11), Some(2.0));
        assert_eq!(d.seasonal_at(13), Some(1.0));
    }

    #[test]
    fn deseasonalize_arithmetic() {
        let d = decomp_with_cycle([1.25, 1.0, 1.0, 1.0]);
        let out = deseasonalize(&row(0, vec![100.0, 7.0]), &d).unwrap();
        assert!((out.revenue()[0] - 80.0).abs() < 1e-12);
        assert_eq!(out.revenue()[1], 7.0);
        let flat = decomp_with_cycle([1.0; 4]);
        let r = row(0, vec![3.0, 4.0, 5.0]);
        assert_eq!(deseasonalize(&r, &flat).unwrap(), r);
    }

    #[test]
    fn reseasonalize_uses_prior_year() {
        let d = decomp_with_cycle([1.25, 0.8, 1.1, 0.9]);
        // forecast quarters 8..12 reuse quarters 4..8
        let out = reseasonalize(&[80.0, 100.0, 10.0, 20.0], 8, &d).unwrap();
        let expected = [100.0, 80.0, 11.0, 18.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let flat = decomp_with_cycle([1.0; 4]);
        assert_eq!(reseasonalize(&[5.0, 6.0], 8, &flat).unwrap(), vec![5.0, 6.0]);
    }

    #[test]
    fn reseasonalize_needs_prior_year() {
        let d = decomp_with_cycle([1.0; 4]);
        assert!(reseasonalize(&[1.0], 3, &d).is_err());
    }

    #[test]
    fn residual_score_hand_value() {
        let mut d = decomp_with_cycle([1.0; 4]);
        assert_eq!(residual_score(&d), 0.0);
        d.residual = vec![1.1, 0.9, 1.1, 0.9];
        assert!((residual_score(&d) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn csv_export_has_one_line_per_fitted_quarter() {
        let d = decomp_with_cycle([1.0; 4]);
        let mut buf = Vec::new();
        write_decompositions([&d], Quarter::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("segment,region,product,quarter,trend,seasonal,residual\n"));
    }
}
