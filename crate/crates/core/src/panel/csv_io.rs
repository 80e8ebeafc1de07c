//! Panel CSV ingestion and canonical serialization.
//!
//! Canonical form: header `segment,region,product,quarter,revenue`, rows
//! ordered by key then quarter, revenues in shortest round-trip notation.
//! Lines starting with `#` are treated as comments on input.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Datarow, DatarowKey, PanelDataset, Quarter, DEFAULT_HORIZON};
use crate::error::{Error, Result};

/// Column mapping and indexing options for [`load_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub segment: String,
    pub region: String,
    pub product: String,
    pub quarter: String,
    pub revenue: String,
    /// Quarter mapped to index 0; defaults to the earliest quarter in the file.
    pub epoch: Option<Quarter>,
    /// Panel length; defaults to the span of quarters present in the file.
    pub n_quarters: Option<usize>,
    pub horizon: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            segment: "segment".into(),
            region: "region".into(),
            product: "product".into(),
            quarter: "quarter".into(),
            revenue: "revenue".into(),
            epoch: None,
            n_quarters: None,
            horizon: DEFAULT_HORIZON,
        }
    }
}

pub fn load_panel(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, schema)
}

struct Observation {
    revenue: f64,
    line: u64,
}

pub fn read_panel<R: Read>(reader: R, schema: &CsvSchema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let cols = [
        column(&schema.segment)?,
        column(&schema.region)?,
        column(&schema.product)?,
        column(&schema.quarter)?,
        column(&schema.revenue)?,
    ];

    let mut grouped: BTreeMap<DatarowKey, BTreeMap<Quarter, Observation>> = BTreeMap::new();
    let mut invalid = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(cols[i]).unwrap_or("");
        let key = DatarowKey::new(field(0), field(1), field(2))
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        let quarter: Quarter = field(3)
            .parse()
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        let revenue: f64 = field(4).parse().map_err(|_| {
            Error::Validation(format!("line {line}: revenue {:?} is not a number", field(4)))
        })?;
        if !(revenue.is_finite() && revenue > 0.0) {
            invalid.push(format!("line {line} ({key} {quarter}): revenue {revenue}"));
            continue;
        }
        let entry = grouped.entry(key.clone()).or_default();
        if let Some(prev) = entry.insert(quarter, Observation { revenue, line }) {
            return Err(Error::Duplicate(format!(
                "{key} {quarter} appears on lines {} and {line}",
                prev.line
            )));
        }
    }
    if !invalid.is_empty() {
        return Err(Error::Validation(format!(
            "non-positive revenue in {} row(s): {}",
            invalid.len(),
            invalid.join("; ")
        )));
    }

    let epoch = match schema.epoch {
        Some(e) => e,
        None => grouped
            .values()
            .filter_map(|obs| obs.keys().next().copied())
            .min()
            .unwrap_or_default(),
    };
    let mut rows = Vec::with_capacity(grouped.len());
    let mut span = 0usize;
    for (key, obs) in grouped {
        let first = *obs.keys().next().expect("non-empty group");
        let first_idx = first.offset_from(epoch);
        if first_idx < 0 {
            return Err(Error::Validation(format!(
                "{key}: quarter {first} precedes epoch {epoch}"
            )));
        }
        let mut values = Vec::with_capacity(obs.len());
        for (i, (q, o)) in obs.iter().enumerate() {
            if q.offset_from(first) != i as i64 {
                return Err(Error::Validation(format!(
                    "{key}: gap before {q} (line {}); rows must be contiguous",
                    o.line
                )));
            }
            values.push(o.revenue);
        }
        let row = Datarow::new(key, first_idx as usize, values)?;
        span = span.max(row.end_quarter());
        rows.push(row);
    }
    let n_quarters = schema.n_quarters.unwrap_or(span);
    PanelDataset::new(rows, n_quarters, schema.horizon, epoch)
}

pub fn write_panel<W: Write>(panel: &PanelDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["segment", "region", "product", "quarter", "revenue"])?;
    for row in panel.rows() {
        let k = row.key();
        for (q, v) in row.iter() {
            let label = panel.epoch().plus(q).to_string();
            let value = format!("{v}");
            wtr.write_record([
                k.segment.as_str(),
                k.region.as_str(),
                k.product.as_str(),
                label.as_str(),
                value.as_str(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<panel writer>", e))?;
    Ok(())
}

pub fn write_panel_string(panel: &PanelDataset) -> Result<String> {
    let mut buf = Vec::new();
    write_panel(panel, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn save_panel(panel: &PanelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_panel(panel, file)
}
