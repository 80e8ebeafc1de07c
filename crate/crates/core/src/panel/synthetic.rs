//! Seeded generator of hierarchical quarterly revenue panels.
//!
//! Each present (segment, region, product) combination gets
//!
//! ```text
//! revenue_t = base_segment * share_region * share_product
//!           * seasonal[t mod 4] * growth^t * exp(sigma_row * z_t)
//! ```
//!
//! with a segment seasonal profile (geometric mean 1) perturbed per row, a
//! per-row growth rate, a per-row noise scale and standard normal `z_t`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Datarow, DatarowKey, PanelDataset, Quarter, DEFAULT_MIN_HISTORY};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_segments: usize,
    pub n_regions: usize,
    pub n_products: usize,
    pub seed: u64,
    /// Standard deviation of the log seasonal profile.
    pub seasonal_amplitude: f64,
    /// Per-quarter multiplicative growth, drawn uniformly per row.
    pub growth_range: (f64, f64),
    /// Baseline log-scale noise; each row scales it by a factor in [0.5, 1.5].
    pub noise_sigma: f64,
    /// Fraction of rows that start too late to be trainable.
    pub short_history_fraction: f64,
    pub base_revenue_range: (f64, f64),
    /// Probability that a (segment, region, product) combination exists.
    pub presence_probability: f64,
    pub n_quarters: usize,
    pub horizon: usize,
    pub min_history: usize,
    /// Shortest training history given to a short row.
    pub short_history_min: usize,
    pub epoch: Quarter,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_segments: 8,
            n_regions: 6,
            n_products: 4,
            seed: 1,
            seasonal_amplitude: 0.15,
            growth_range: (0.995, 1.02),
            noise_sigma: 0.05,
            short_history_fraction: 0.16,
            base_revenue_range: (1.0e7, 1.0e9),
            presence_probability: 0.85,
            n_quarters: super::DEFAULT_N_QUARTERS,
            horizon: super::DEFAULT_HORIZON,
            min_history: DEFAULT_MIN_HISTORY,
            short_history_min: 11,
            epoch: Quarter::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.n_segments == 0 || self.n_regions == 0 || self.n_products == 0 {
            return fail("segment, region and product counts must be >= 1".into());
        }
        if self.seasonal_amplitude < 0.0 || !self.seasonal_amplitude.is_finite() {
            return fail(format!("seasonal_amplitude {} < 0", self.seasonal_amplitude));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return fail(format!("noise_sigma {} < 0", self.noise_sigma));
        }
        for (name, p) in [
            ("short_history_fraction", self.short_history_fraction),
            ("presence_probability", self.presence_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} {p} outside [0, 1]"));
            }
        }
        let (glo, ghi) = self.growth_range;
        if !(glo > 0.0 && glo <= ghi && ghi.is_finite()) {
            return fail(format!("growth_range ({glo}, {ghi}) must be positive and ordered"));
        }
        let (blo, bhi) = self.base_revenue_range;
        if !(blo > 0.0 && blo <= bhi && bhi.is_finite()) {
            return fail(format!(
                "base_revenue_range ({blo}, {bhi}) must be positive and ordered"
            ));
        }
        if self.horizon >= self.n_quarters {
            return fail("horizon must be smaller than n_quarters".into());
        }
        let train_end = self.n_quarters - self.horizon;
        if self.short_history_fraction > 0.0
            && !(1 <= self.short_history_min
                && self.short_history_min < self.min_history
                && self.min_history <= train_end)
        {
            return fail(format!(
                "need 1 <= short_history_min ({}) < min_history ({}) <= training length ({train_end})",
                self.short_history_min, self.min_history
            ));
        }
        Ok(())
    }
}

fn label(prefix: char, i: usize, count: usize) -> String {
    let width = count.to_string().len().max(2);
    format!("{prefix}{:0width$}", i + 1)
}

fn normalized_shares(rng: &mut Rng, n: usize, spread: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| (spread * rng.normal()).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Zero-mean, unit-RMS log profile over the four quarters of the year.
fn log_profile(rng: &mut Rng) -> [f64; 4] {
    let mut p = [0.0; 4];
    for v in p.iter_mut() {
        *v = rng.normal();
    }
    let mean = p.iter().sum::<f64>() / 4.0;
    p.iter_mut().for_each(|v| *v -= mean);
    let rms = (p.iter().map(|v| v * v).sum::<f64>() / 4.0).sqrt();
    if rms > 0.0 {
        p.iter_mut().for_each(|v| *v /= rms);
    }
    p
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PanelDataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let train_end = spec.n_quarters - spec.horizon;

    let product_shares = normalized_shares(&mut rng, spec.n_products, 0.8);
    struct Draft {
        key: DatarowKey,
        level: f64,
        log_season: [f64; 4],
        growth: f64,
        sigma: f64,
    }
    let mut drafts = Vec::new();
    for s in 0..spec.n_segments {
        let (blo, bhi) = spec.base_revenue_range;
        let base = rng.uniform(blo.ln(), bhi.ln()).exp();
        let region_shares = normalized_shares(&mut rng, spec.n_regions, 0.6);
        let segment_profile = log_profile(&mut rng);
        let mut present_any = false;
        for r in 0..spec.n_regions {
            for p in 0..spec.n_products {
                let last_chance = !present_any && r + 1 == spec.n_regions && p + 1 == spec.n_products;
                let present = rng.bernoulli(spec.presence_probability) || last_chance;
                let jitter = log_profile(&mut rng);
                let growth = rng.uniform(spec.growth_range.0, spec.growth_range.1);
                let sigma = spec.noise_sigma * rng.uniform(0.5, 1.5);
                if !present {
                    continue;
                }
                present_any = true;
                let mut log_season = [0.0; 4];
                for j in 0..4 {
                    log_season[j] =
                        spec.seasonal_amplitude * (segment_profile[j] + 0.3 * jitter[j]);
                }
                drafts.push(Draft {
                    key: DatarowKey::new(
                        label('S', s, spec.n_segments),
                        label('R', r, spec.n_regions),
                        label('P', p, spec.n_products),
                    )?,
                    level: base * region_shares[r] * product_shares[p],
                    log_season,
                    growth,
                    sigma,
                });
            }
        }
    }

    let n_short = (spec.short_history_fraction * drafts.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..drafts.len()).collect();
    rng.shuffle(&mut order);
    let short: BTreeSet<usize> = order.into_iter().take(n_short).collect();

    let mut rows = Vec::with_capacity(drafts.len());
    for (i, d) in drafts.into_iter().enumerate() {
        let first_quarter = if short.contains(&i) {
            let span = spec.min_history - spec.short_history_min;
            train_end - (spec.short_history_min + rng.below(span))
        } else {
            0
        };
        let values = (first_quarter..spec.n_quarters)
            .map(|t| {
                let noise = if d.sigma > 0.0 { d.sigma * rng.normal() } else { 0.0 };
                let log_value = d.level.ln()
                    + d.log_season[(spec.epoch.quarter() as usize - 1 + t) % 4]
                    + t as f64 * d.growth.ln()
                    + noise;
                log_value.exp()
            })
            .collect();
        rows.push(Datarow::new(d.key, first_quarter, values)?);
    }
    PanelDataset::new(rows, spec.n_quarters, spec.horizon, spec.epoch)
}
