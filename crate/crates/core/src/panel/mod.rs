//! Hierarchical datarow panels: keys, quarterly series, CSV I/O, synthetic
//! generation and the training-eligibility split.

mod csv_io;
mod quarter;
mod split;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_panel, read_panel, save_panel, write_panel, write_panel_string, CsvSchema};
pub use quarter::Quarter;
pub use split::{split_eligibility, split_eligibility_at, EligibilitySplit, DEFAULT_MIN_HISTORY};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// Identifies one datarow by its (segment, region, product) triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DatarowKey {
    pub segment: String,
    pub region: String,
    pub product: String,
}

impl DatarowKey {
    pub fn new(
        segment: impl Into<String>,
        region: impl Into<String>,
        product: impl Into<String>,
    ) -> Result<Self> {
        let key = Self {
            segment: segment.into(),
            region: region.into(),
            product: product.into(),
        };
        if key.segment.is_empty() || key.region.is_empty() || key.product.is_empty() {
            return Err(Error::Validation(format!(
                "datarow key has an empty label: {key}"
            )));
        }
        Ok(key)
    }
}

impl fmt::Display for DatarowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.segment, self.region, self.product)
    }
}

/// A contiguous quarterly revenue series starting at `first_quarter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datarow {
    key: DatarowKey,
    first_quarter: usize,
    revenue: Vec<f64>,
}

impl Datarow {
    pub fn new(key: DatarowKey, first_quarter: usize, revenue: Vec<f64>) -> Result<Self> {
        if revenue.is_empty() {
            return Err(Error::Validation(format!("datarow {key} has no values")));
        }
        if let Some((i, v)) = revenue
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Validation(format!(
                "datarow {key}: revenue at quarter {} is {v}; revenues must be positive",
                first_quarter + i
            )));
        }
        Ok(Self {
            key,
            first_quarter,
            revenue,
        })
    }

    pub fn key(&self) -> &DatarowKey {
        &self.key
    }

    pub fn first_quarter(&self) -> usize {
        self.first_quarter
    }

    /// One past the last observed quarter.
    pub fn end_quarter(&self) -> usize {
        self.first_quarter + self.revenue.len()
    }

    pub fn len(&self) -> usize {
        self.revenue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revenue.is_empty()
    }

    pub fn revenue(&self) -> &[f64] {
        &self.revenue
    }

    pub fn value_at(&self, quarter: usize) -> Option<f64> {
        quarter
            .checked_sub(self.first_quarter)
            .and_then(|i| self.revenue.get(i).copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.revenue
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.first_quarter + i, *v))
    }

    /// Observations strictly before `quarter`.
    pub fn values_before(&self, quarter: usize) -> &[f64] {
        let n = quarter.saturating_sub(self.first_quarter).min(self.revenue.len());
        &self.revenue[..n]
    }

    /// Observations in `[from, to)`, or `None` if the row does not cover the range.
    pub fn values_between(&self, from: usize, to: usize) -> Option<&[f64]> {
        if from < self.first_quarter || to > self.end_quarter() || from > to {
            return None;
        }
        Some(&self.revenue[from - self.first_quarter..to - self.first_quarter])
    }

    /// Same row with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.key.clone(),
            self.first_quarter,
            self.revenue.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Immutable collection of datarows sorted by key.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    rows: Vec<Datarow>,
    index: BTreeMap<DatarowKey, usize>,
    n_quarters: usize,
    horizon: usize,
    epoch: Quarter,
}

pub const DEFAULT_N_QUARTERS: usize = 39;
pub const DEFAULT_HORIZON: usize = 4;

impl PanelDataset {
    pub fn new(
        mut rows: Vec<Datarow>,
        n_quarters: usize,
        horizon: usize,
        epoch: Quarter,
    ) -> Result<Self> {
        if horizon >= n_quarters {
            return Err(Error::Validation(format!(
                "horizon {horizon} must be smaller than n_quarters {n_quarters}"
            )));
        }
        rows.sort_by(|a, b| a.key.cmp(&b.key));
        let mut index = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            if row.end_quarter() > n_quarters {
                return Err(Error::Validation(format!(
                    "datarow {} extends to quarter {} beyond n_quarters {n_quarters}",
                    row.key,
                    row.end_quarter() - 1
                )));
            }
            if index.insert(row.key.clone(), i).is_some() {
                return Err(Error::Duplicate(format!("datarow key {}", row.key)));
            }
        }
        Ok(Self {
            rows,
            index,
            n_quarters,
            horizon,
            epoch,
        })
    }

    pub fn rows(&self) -> &[Datarow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &DatarowKey) -> Option<&Datarow> {
        self.index.get(key).map(|&i| &self.rows[i])
    }

    pub fn keys(&self) -> impl Iterator<Item = &DatarowKey> {
        self.rows.iter().map(|r| &r.key)
    }

    pub fn n_quarters(&self) -> usize {
        self.n_quarters
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn epoch(&self) -> Quarter {
        self.epoch
    }

    /// First test quarter; training quarters are `0..train_end()`.
    pub fn train_end(&self) -> usize {
        self.n_quarters - self.horizon
    }

    pub fn segments(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.key.segment.as_str()).collect()
    }

    /// Panel with every revenue multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .map(|r| r.scaled(factor))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, self.n_quarters, self.horizon, self.epoch)
    }

    /// Sub-panel restricted to `keys`.
    pub fn subset(&self, keys: &BTreeSet<DatarowKey>) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .filter(|r| keys.contains(&r.key))
            .cloned()
            .collect();
        Self::new(rows, self.n_quarters, self.horizon, self.epoch)
    }
}
