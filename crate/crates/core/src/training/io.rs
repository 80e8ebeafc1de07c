use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{write_panel_string, DatarowKey, PanelDataset, Quarter};

use super::runner::{ExperimentOutcome, RunFailure};
use super::{sha256_hex, TrainingConfig};

const HASH_PREFIX: &str = "# config_hash=";
const HEADER: [&str; 6] = ["run", "segment", "region", "product", "quarter", "forecast"];

/// Forecasts of several runs, each row covering consecutive quarters from
/// `first_quarter`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForecastTable {
    pub config_hash: Option<String>,
    pub first_quarter: usize,
    pub runs: BTreeMap<usize, BTreeMap<DatarowKey, Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub run: usize,
    pub segment: String,
    pub region: String,
    pub product: String,
    pub quarter: Quarter,
    pub forecast: f64,
}

/// Writes `run,segment,region,product,quarter,forecast` rows under a
/// `# config_hash=` line. Quarter labels count from `epoch`.
pub fn write_forecasts<'a, W: Write>(
    mut writer: W,
    config_hash: &str,
    epoch: Quarter,
    first_quarter: usize,
    runs: impl IntoIterator<Item = (usize, &'a BTreeMap<DatarowKey, Vec<f64>>)>,
) -> Result<()> {
    writeln!(writer, "{HASH_PREFIX}{config_hash}").map_err(|e| Error::io("<forecasts>", e))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for (run, forecasts) in runs {
        for (key, values) in forecasts {
            for (i, v) in values.iter().enumerate() {
                w.write_record([
                    run.to_string(),
                    key.segment.clone(),
                    key.region.clone(),
                    key.product.clone(),
                    epoch.plus(first_quarter + i).to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<forecasts>", e))?;
    Ok(())
}

pub fn read_forecasts<R: Read>(mut reader: R, epoch: Quarter) -> Result<ForecastTable> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<forecasts>", e))?;
    let config_hash = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(HASH_PREFIX))
        .map(|h| h.trim().to_string());
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Schema(format!(
            "forecast file header {:?}, expected {:?}",
            headers.iter().collect::<Vec<_>>(),
            HEADER
        )));
    }
    let mut cells: BTreeMap<(usize, DatarowKey), BTreeMap<usize, f64>> = BTreeMap::new();
    let mut first: Option<usize> = None;
    for rec in r.deserialize::<ForecastRecord>() {
        let rec = rec?;
        let offset = rec.quarter.offset_from(epoch);
        let q = usize::try_from(offset).map_err(|_| {
            Error::Validation(format!("forecast quarter {} precedes {epoch}", rec.quarter))
        })?;
        let key = DatarowKey::new(rec.segment, rec.region, rec.product)?;
        if !rec.forecast.is_finite() {
            return Err(Error::Validation(format!("non-finite forecast for {key} at {}", rec.quarter)));
        }
        if cells.entry((rec.run, key.clone())).or_default().insert(q, rec.forecast).is_some() {
            return Err(Error::Duplicate(format!("run {} {key} {}", rec.run, rec.quarter)));
        }
        first = Some(first.map_or(q, |f| f.min(q)));
    }
    let first_quarter = first.unwrap_or(0);
    let mut table = ForecastTable {
        config_hash,
        first_quarter,
        runs: BTreeMap::new(),
    };
    for ((run, key), by_q) in cells {
        let expected: Vec<usize> = (first_quarter..first_quarter + by_q.len()).collect();
        if by_q.keys().copied().collect::<Vec<_>>() != expected {
            return Err(Error::Validation(format!(
                "run {run} {key}: forecast quarters must be consecutive from {}",
                epoch.plus(first_quarter)
            )));
        }
        table.runs.entry(run).or_default().insert(key, by_q.into_values().collect());
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    #[serde(flatten)]
    pub key: DatarowKey,
    pub reason: String,
}

/// Provenance record written next to training outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub format: String,
    pub config_hash: String,
    pub panel_hash: String,
    pub config: TrainingConfig,
    pub train_end: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub successful_runs: Vec<usize>,
    pub failures: Vec<RunFailure>,
    pub trainable_rows: usize,
    pub out_of_sample_rows: usize,
    pub unforecastable: Vec<SkippedRow>,
}

impl ExperimentManifest {
    pub fn new(panel: &PanelDataset, outcome: &ExperimentOutcome) -> Result<Self> {
        Ok(Self {
            format: "hiercast-manifest".into(),
            config_hash: outcome.config_hash.clone(),
            panel_hash: sha256_hex(write_panel_string(panel)?.as_bytes()),
            config: outcome.config.clone(),
            train_end: outcome.train_end,
            horizon: outcome.horizon,
            seeds: (0..outcome.config.runs).map(|r| outcome.config.run_seed(r)).collect(),
            successful_runs: outcome.results.iter().map(|r| r.run).collect(),
            failures: outcome.failures.clone(),
            trainable_rows: outcome.trainable,
            out_of_sample_rows: outcome.out_of_sample,
            unforecastable: outcome
                .skipped
                .iter()
                .map(|(k, r)| SkippedRow {
                    key: k.clone(),
                    reason: r.clone(),
                })
                .collect(),
        })
    }
}
