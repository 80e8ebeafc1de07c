use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    aggregate_level, density_summary, evaluable_keys, improvements, level_mapes, signed_percent_errors,
    DensitySummary, Improvements, Level, LevelMapes, MapeMode, WORLD,
};
use crate::error::{Error, Result};
use crate::panel::{DatarowKey, PanelDataset};
use crate::training::aggregate_runs;

type Forecasts = BTreeMap<DatarowKey, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationOptions {
    pub mode: MapeMode,
    pub bins: usize,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            mode: MapeMode::PerQuarter,
            bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDensity {
    /// `world` or a segment label.
    pub level: String,
    pub summary: DensitySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub first_quarter: usize,
    pub horizon: usize,
    pub rows: usize,
    pub runs: usize,
    pub mode: MapeMode,
    /// MAPEs of the run-mean forecast.
    pub mape: LevelMapes,
    pub segment_weights: BTreeMap<String, f64>,
    pub baseline: Option<LevelMapes>,
    pub improvement: Option<Improvements>,
    /// Per level, each run's signed percent error averaged over quarters.
    pub signed_errors: BTreeMap<String, Vec<f64>>,
    /// Present with at least two runs.
    pub density: Vec<LevelDensity>,
}

fn intersect(mut keys: BTreeSet<DatarowKey>, other: impl Fn(&DatarowKey) -> bool) -> BTreeSet<DatarowKey> {
    keys.retain(|k| other(k));
    keys
}

fn horizon_of(f: &Forecasts) -> usize {
    f.values().next().map_or(0, Vec::len)
}

/// Evaluates the run-mean of `runs` on the rows that have actuals, a
/// forecast in every run, a baseline forecast when one is given, and
/// membership in `restrict` when given.
pub fn evaluate(
    panel: &PanelDataset,
    model: &str,
    runs: &BTreeMap<usize, Forecasts>,
    first_quarter: usize,
    baseline: Option<&Forecasts>,
    restrict: Option<&BTreeSet<DatarowKey>>,
    opts: &EvaluationOptions,
) -> Result<EvaluationReport> {
    let mean = aggregate_runs(runs.values())?;
    let mut keys = evaluable_keys(panel, &mean, first_quarter);
    keys = intersect(keys, |k| runs.values().all(|r| r.contains_key(k)));
    if let Some(b) = baseline {
        keys = intersect(keys, |k| b.contains_key(k));
    }
    if let Some(r) = restrict {
        keys = intersect(keys, |k| r.contains(k));
    }
    if keys.is_empty() {
        return Err(Error::Validation(format!("{model}: no datarows to evaluate")));
    }
    let (mape, segment_weights) = level_mapes(&mean, panel, &keys, first_quarter, opts.mode)?;
    let base = baseline
        .map(|b| level_mapes(b, panel, &keys, first_quarter, opts.mode).map(|r| r.0))
        .transpose()?;
    let improvement = base.as_ref().map(|b| improvements(b, &mape));

    let mut signed_errors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in runs.values() {
        for level in [Level::World, Level::Segment] {
            for (name, g) in aggregate_level(run, panel, &keys, first_quarter, level)? {
                let e = signed_percent_errors(&g.forecast, &g.actual)?;
                signed_errors
                    .entry(name)
                    .or_default()
                    .push(e.iter().sum::<f64>() / e.len() as f64);
            }
        }
    }
    let density = if runs.len() >= 2 {
        signed_errors
            .iter()
            .map(|(level, v)| {
                density_summary(v, opts.bins).map(|summary| LevelDensity {
                    level: level.clone(),
                    summary,
                })
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(EvaluationReport {
        model: model.to_string(),
        first_quarter,
        horizon: horizon_of(&mean),
        rows: keys.len(),
        runs: runs.len(),
        mode: opts.mode,
        mape,
        segment_weights,
        baseline: base,
        improvement,
        signed_errors,
        density,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub world_mape: f64,
    pub world_improvement: Option<f64>,
    pub revenue_weighted_segment_mape: f64,
    pub revenue_weighted_segment_improvement: Option<f64>,
    pub segment_improvements: BTreeMap<String, Option<f64>>,
}

/// Improvement of several models over one baseline on a shared row set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows_evaluated: usize,
    pub mode: MapeMode,
    pub baseline: LevelMapes,
    pub segment_weights: BTreeMap<String, f64>,
    pub models: Vec<ComparisonRow>,
    pub reports: Vec<EvaluationReport>,
}

/// Evaluates every model on the rows all of them, and the baseline, can
/// forecast.
pub fn compare(
    panel: &PanelDataset,
    models: &[(String, BTreeMap<usize, Forecasts>)],
    baseline: &Forecasts,
    first_quarter: usize,
    opts: &EvaluationOptions,
) -> Result<Comparison> {
    let mut common = evaluable_keys(panel, baseline, first_quarter);
    for (_, runs) in models {
        common = intersect(common, |k| runs.values().all(|r| r.contains_key(k)));
    }
    if common.is_empty() {
        return Err(Error::Validation("compared models share no evaluable datarows".into()));
    }
    let (base, segment_weights) = level_mapes(baseline, panel, &common, first_quarter, opts.mode)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (name, runs) in models {
        let report = evaluate(panel, name, runs, first_quarter, Some(baseline), Some(&common), opts)?;
        let imp = report.improvement.clone().expect("baseline given");
        rows.push(ComparisonRow {
            model: name.clone(),
            world_mape: report.mape.world,
            world_improvement: imp.world,
            revenue_weighted_segment_mape: report.mape.revenue_weighted_segment,
            revenue_weighted_segment_improvement: imp.revenue_weighted_segment,
            segment_improvements: imp.segments,
        });
        reports.push(report);
    }
    Ok(Comparison {
        rows_evaluated: common.len(),
        mode: opts.mode,
        baseline: base,
        segment_weights,
        models: rows,
        reports,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<report>", e)
}

/// `level,group,model_mape,baseline_mape,improvement_pct`.
pub fn write_report_csv<W: Write>(report: &EvaluationReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["level", "group", "model_mape", "baseline_mape", "improvement_pct"])?;
    let base = report.baseline.as_ref();
    let imp = report.improvement.as_ref();
    for (seg, m) in &report.mape.segments {
        w.write_record([
            "segment".to_string(),
            seg.clone(),
            m.to_string(),
            opt(base.and_then(|b| b.segments.get(seg).copied())),
            opt(imp.and_then(|i| i.segments.get(seg).copied().flatten())),
        ])?;
    }
    w.write_record([
        "revenue_weighted_segment".to_string(),
        "all".to_string(),
        report.mape.revenue_weighted_segment.to_string(),
        opt(base.map(|b| b.revenue_weighted_segment)),
        opt(imp.and_then(|i| i.revenue_weighted_segment)),
    ])?;
    w.write_record([
        "world".to_string(),
        WORLD.to_string(),
        report.mape.world.to_string(),
        opt(base.map(|b| b.world)),
        opt(imp.and_then(|i| i.world)),
    ])?;
    w.flush().map_err(io_err)
}

/// `level,bin_lo,bin_hi,count`.
pub fn write_density_csv<W: Write>(density: &[LevelDensity], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["level", "bin_lo", "bin_hi", "count"])?;
    for d in density {
        for b in &d.summary.histogram {
            w.write_record([d.level.clone(), b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
        }
    }
    w.flush().map_err(io_err)
}

/// Writes the world-level table (one row per model) and the segment table
/// (one row per segment plus the revenue-weighted row, one column per model).
pub fn write_comparison_csv<W1: Write, W2: Write>(c: &Comparison, world: W1, segments: W2) -> Result<()> {
    let mut w = csv::Writer::from_writer(world);
    w.write_record([
        "model",
        "world_mape",
        "world_improvement_pct",
        "revenue_weighted_segment_mape",
        "revenue_weighted_segment_improvement_pct",
    ])?;
    w.write_record([
        "baseline".to_string(),
        c.baseline.world.to_string(),
        "0".to_string(),
        c.baseline.revenue_weighted_segment.to_string(),
        "0".to_string(),
    ])?;
    for r in &c.models {
        w.write_record([
            r.model.clone(),
            r.world_mape.to_string(),
            opt(r.world_improvement),
            r.revenue_weighted_segment_mape.to_string(),
            opt(r.revenue_weighted_segment_improvement),
        ])?;
    }
    w.flush().map_err(io_err)?;

    let mut s = csv::Writer::from_writer(segments);
    let mut header = vec!["segment".to_string()];
    header.extend(c.models.iter().map(|r| r.model.clone()));
    s.write_record(&header)?;
    for seg in c.baseline.segments.keys() {
        let mut rec = vec![seg.clone()];
        rec.extend(
            c.models
                .iter()
                .map(|r| opt(r.segment_improvements.get(seg).copied().flatten())),
        );
        s.write_record(&rec)?;
    }
    let mut rec = vec!["revenue_weighted".to_string()];
    rec.extend(c.models.iter().map(|r| opt(r.revenue_weighted_segment_improvement)));
    s.write_record(&rec)?;
    s.flush().map_err(io_err)
}
