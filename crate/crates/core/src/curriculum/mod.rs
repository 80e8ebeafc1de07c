//! Baby Steps curriculum: datarows are scored by STL residual size, sorted
//! easy to hard, split into `k` batches and introduced one batch per stage.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DatarowKey, PanelDataset};
use crate::preprocess::{residual_score, Decomposition};
use crate::rng::Rng;

pub const DEFAULT_LSTM_BATCHES: usize = 5;
pub const DEFAULT_DCNN_BATCHES: usize = 8;
pub const DEFAULT_EPOCHS_PER_STAGE: usize = 75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Residual score times the row's segment share of training revenue.
    SegmentRevenue,
    /// Residual score times the segment's absolute training revenue.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    #[default]
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    Uniform,
    BySegment,
}

macro_rules! parse_enum {
    ($ty:ty, $what:literal, $($name:literal => $v:expr),+) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($v),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " {:?}"), other))),
                }
            }
        }
    };
}

parse_enum!(Weighting, "weighting", "uniform" => Weighting::Uniform,
    "segment_revenue" => Weighting::SegmentRevenue, "raw" => Weighting::Raw);
parse_enum!(Ordering, "ordering", "ascending" => Ordering::Ascending,
    "descending" => Ordering::Descending);
parse_enum!(Grouping, "grouping", "uniform" => Grouping::Uniform,
    "by_segment" => Grouping::BySegment);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub k: usize,
    pub ordering: Ordering,
    pub grouping: Grouping,
    pub weighting: Weighting,
    pub epochs_per_stage: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_LSTM_BATCHES,
            ordering: Ordering::Ascending,
            grouping: Grouping::Uniform,
            weighting: Weighting::Uniform,
            epochs_per_stage: DEFAULT_EPOCHS_PER_STAGE,
        }
    }
}

/// Training-quarter revenue totals used for weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRevenue {
    pub by_row: BTreeMap<DatarowKey, f64>,
    pub by_segment: BTreeMap<String, f64>,
    pub total: f64,
}

impl TrainingRevenue {
    /// Sums revenue over each row's quarters before `panel.train_end()`.
    pub fn from_panel(panel: &PanelDataset) -> Self {
        Self::at(panel, panel.train_end())
    }

    pub fn at(panel: &PanelDataset, train_end: usize) -> Self {
        let mut by_row = BTreeMap::new();
        let mut by_segment = BTreeMap::new();
        let mut total = 0.0;
        for row in panel.rows() {
            let r: f64 = row.values_before(train_end).iter().sum();
            by_row.insert(row.key().clone(), r);
            *by_segment.entry(row.key().segment.clone()).or_insert(0.0) += r;
            total += r;
        }
        Self {
            by_row,
            by_segment,
            total,
        }
    }

    pub fn segment_share(&self, segment: &str) -> f64 {
        if self.total > 0.0 {
            self.by_segment.get(segment).copied().unwrap_or(0.0) / self.total
        } else {
            0.0
        }
    }
}

/// Difficulty `C(d)` for every key in `keys`.
pub fn score_datarows<'a>(
    keys: impl IntoIterator<Item = &'a DatarowKey>,
    decomps: &BTreeMap<DatarowKey, Decomposition>,
    weighting: Weighting,
    revenue: &TrainingRevenue,
) -> Result<BTreeMap<DatarowKey, f64>> {
    let mut scores = BTreeMap::new();
    let mut missing = Vec::new();
    for key in keys {
        let Some(d) = decomps.get(key) else {
            missing.push(key.to_string());
            continue;
        };
        let base = residual_score(d);
        let factor = match weighting {
            Weighting::Uniform => 1.0,
            Weighting::SegmentRevenue => revenue.segment_share(&key.segment),
            Weighting::Raw => revenue.by_segment.get(&key.segment).copied().unwrap_or(0.0),
        };
        scores.insert(key.clone(), base * factor);
    }
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "no decomposition for {} datarow(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    Ok(scores)
}

/// Ordered batches `D^1..D^k` plus what produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumPlan {
    batches: Vec<Vec<DatarowKey>>,
    scores: BTreeMap<DatarowKey, f64>,
    config: CurriculumConfig,
    seed: u64,
}

fn by_score(scores: &BTreeMap<DatarowKey, f64>) -> Vec<DatarowKey> {
    let mut keys: Vec<&DatarowKey> = scores.keys().collect();
    keys.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]).then_with(|| a.cmp(b)));
    keys.into_iter().cloned().collect()
}

/// Sorts by score (ties by key) and splits into batches. Under
/// `Grouping::BySegment` there is one batch per segment, ordered by the
/// revenue-weighted mean score of its rows, and `config.k` is ignored.
/// `row_revenue` supplies those weights; rows without an entry weigh 1.
pub fn build_plan(
    scores: &BTreeMap<DatarowKey, f64>,
    row_revenue: Option<&BTreeMap<DatarowKey, f64>>,
    config: &CurriculumConfig,
    seed: u64,
) -> Result<CurriculumPlan> {
    if let Some((k, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::Validation(format!("non-finite curriculum score {s} for {k}")));
    }
    let mut batches = match config.grouping {
        Grouping::Uniform => {
            let n = scores.len();
            let k = config.k;
            if k == 0 || k > n {
                return Err(Error::Config(format!(
                    "curriculum k = {k} must be in 1..={n} (number of scored datarows)"
                )));
            }
            let sorted = by_score(scores);
            (0..k)
                .map(|i| sorted[i * n / k..(i + 1) * n / k].to_vec())
                .collect::<Vec<_>>()
        }
        Grouping::BySegment => {
            if scores.is_empty() {
                return Err(Error::Config("curriculum has no datarows to group".into()));
            }
            let mut groups: BTreeMap<&str, (f64, f64, Vec<DatarowKey>)> = BTreeMap::new();
            for key in by_score(scores) {
                let w = row_revenue.and_then(|r| r.get(&key)).copied().unwrap_or(1.0);
                let entry = groups.entry(&scores.get_key_value(&key).expect("scored").0.segment).or_default();
                entry.0 += w * scores[&key];
                entry.1 += w;
                entry.2.push(key);
            }
            let mut ranked: Vec<(f64, &str, Vec<DatarowKey>)> = groups
                .into_iter()
                .map(|(seg, (ws, w, keys))| (if w > 0.0 { ws / w } else { 0.0 }, seg, keys))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            ranked.into_iter().map(|(_, _, keys)| keys).collect()
        }
    };
    if config.ordering == Ordering::Descending {
        batches.reverse();
        for b in &mut batches {
            b.reverse();
        }
    }
    Ok(CurriculumPlan {
        batches,
        scores: scores.clone(),
        config: config.clone(),
        seed,
    })
}

impl CurriculumPlan {
    pub fn batches(&self) -> &[Vec<DatarowKey>] {
        &self.batches
    }

    pub fn scores(&self) -> &BTreeMap<DatarowKey, f64> {
        &self.scores
    }

    pub fn config(&self) -> &CurriculumConfig {
        &self.config
    }

    /// Number of stages, which is `k` under uniform grouping.
    pub fn stages(&self) -> usize {
        self.batches.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Union of batches `1..=stage`, in plan order.
    pub fn stage_training_set(&self, stage: usize) -> Result<Vec<DatarowKey>> {
        if stage == 0 || stage > self.batches.len() {
            return Err(Error::Config(format!(
                "curriculum stage {stage} outside 1..={}",
                self.batches.len()
            )));
        }
        Ok(self.batches[..stage].iter().flatten().cloned().collect())
    }

    /// Stage keys shuffled for one epoch; the order depends only on the plan
    /// seed and the `(window, stage, epoch)` coordinates.
    pub fn epoch_order(&self, window: usize, stage: usize, epoch: usize) -> Result<Vec<DatarowKey>> {
        let mut keys = self.stage_training_set(stage)?;
        let label = ((window as u64) << 40) ^ ((stage as u64) << 24) ^ epoch as u64;
        Rng::new(self.seed).derive(label).shuffle(&mut keys);
        Ok(keys)
    }

    pub fn keys(&self) -> BTreeSet<DatarowKey> {
        self.batches.iter().flatten().cloned().collect()
    }

    pub fn to_export(&self) -> PlanExport {
        let label = |k: &DatarowKey| k.to_string();
        PlanExport {
            config: self.config.clone(),
            seed: self.seed,
            batches: self.batches.iter().map(|b| b.iter().map(label).collect()).collect(),
            scores: self
                .scores
                .iter()
                .map(|(k, s)| ScoreEntry {
                    key: k.clone(),
                    score: *s,
                })
                .collect(),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_export())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    #[serde(flatten)]
    pub key: DatarowKey,
    pub score: f64,
}

/// JSON form of a plan; batches list keys as `segment/region/product`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub config: CurriculumConfig,
    pub seed: u64,
    pub batches: Vec<Vec<String>>,
    pub scores: Vec<ScoreEntry>,
}
