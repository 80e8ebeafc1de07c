//! Command-line interface. Data goes to files under `--out`; logs and the
//! one-line error report go to standard error.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baseline::baseline_forecast;
use crate::curriculum::{Grouping, Ordering};
use crate::error::{Error, Result};
use crate::evaluation::{
    compare, evaluate, write_comparison_csv, write_density_csv, write_report_csv, MapeMode,
};
use crate::nn::Checkpoint;
use crate::panel::{generate_synthetic, load_panel, write_panel, DatarowKey, PanelDataset};
use crate::training::{
    forecast_from_checkpoint, read_forecasts, run_experiment, sha256_hex, write_forecasts,
    ExperimentManifest, ModelVariant,
};

pub use config::{FileConfig, CONFIG_VERSION};

#[derive(Debug, Parser)]
#[command(name = "hiercast", version, about = "Hierarchical revenue forecasting")]
pub struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic panel to <out>/panel.csv.
    Generate(GenerateArgs),
    /// Train a model variant over several seeded runs.
    Train(TrainArgs),
    /// Forecast a panel with a saved checkpoint.
    Forecast(ForecastArgs),
    /// Classical baseline forecasts.
    Baseline(BaselineArgs),
    /// MAPE report of a forecast file, optionally against a baseline.
    Evaluate(EvaluateArgs),
    /// Improvement of several model variants over the baseline.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct TrainingFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_parser = parse_ordering)]
    pub ordering: Option<Ordering>,
    #[arg(long, value_parser = parse_grouping)]
    pub grouping: Option<Grouping>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Maximum concurrent runs.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Panel CSV.
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<ModelVariant>,
    #[command(flatten)]
    pub flags: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub panel: PathBuf,
    /// Forecast CSV, possibly with several runs.
    #[arg(long)]
    pub forecasts: PathBuf,
    /// Baseline forecast CSV.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Segment and world MAPE over quarters: per_quarter or totals.
    #[arg(long, value_parser = parse_mode)]
    pub mape_mode: Option<MapeMode>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub panel: PathBuf,
    /// Variants to train and compare; all seven when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    pub variant: Vec<ModelVariant>,
    /// Existing forecast files as name=path; skips training.
    #[arg(long = "forecasts", value_parser = parse_named_path)]
    pub forecasts: Vec<(String, PathBuf)>,
    /// Baseline forecast CSV; computed when omitted.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mape_mode: Option<MapeMode>,
    #[command(flatten)]
    pub flags: TrainingFlags,
}

fn parse_variant(s: &str) -> std::result::Result<ModelVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ordering(s: &str) -> std::result::Result<Ordering, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_grouping(s: &str) -> std::result::Result<Grouping, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<MapeMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=path, got {s:?}"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected name=path, got {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

/// One-line diagnostic for a failed command.
pub fn error_line(e: &Error) -> String {
    serde_json::json!({
        "error": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    })
    .to_string()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Forecast(a) => forecast(a),
        Command::Baseline(a) => baseline(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Creates `path` and writes the provenance line.
fn artifact(path: &Path, hash: &str) -> Result<BufWriter<File>> {
    let mut w = create(path)?;
    writeln!(w, "# config_hash={hash}").map_err(|e| Error::io(path, e))?;
    Ok(w)
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

fn load(path: &Path, cfg: &FileConfig) -> Result<PanelDataset> {
    load_panel(path, &cfg.panel)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.synthetic.seed = seed;
    }
    let panel = generate_synthetic(&cfg.synthetic)?;
    let hash = sha256_hex(serde_json::to_string(&cfg.synthetic)?.as_bytes());
    let path = a.common.out.join("panel.csv");
    let mut w = artifact(&path, &hash)?;
    write_panel(&panel, &mut w)?;
    finish(w, &path)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.apply(a.variant, &a.flags);
    let panel = load(&a.panel, &cfg)?;
    let out = &a.common.out;
    let outcome = run_experiment(&panel, &cfg.training)?;
    let hash = outcome.config_hash.clone();

    let path = out.join("forecasts.csv");
    let mut w = create(&path)?;
    write_forecasts(
        &mut w,
        &hash,
        panel.epoch(),
        outcome.train_end,
        outcome.results.iter().map(|r| (r.run, &r.forecasts)),
    )?;
    finish(w, &path)?;

    let path = out.join("loss_trace.csv");
    let mut w = artifact(&path, &hash)?;
    {
        let mut c = csv::Writer::from_writer(&mut w);
        c.write_record(["run", "window", "stage", "epoch", "loss"])?;
        for r in &outcome.results {
            for l in &r.loss_trace {
                c.write_record([
                    r.run.to_string(),
                    l.window.to_string(),
                    l.stage.to_string(),
                    l.epoch.to_string(),
                    l.loss.to_string(),
                ])?;
            }
        }
        c.flush().map_err(|e| Error::io(&path, e))?;
    }
    finish(w, &path)?;

    let dir = out.join("checkpoints");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for r in &outcome.results {
        let path = out
            .join("checkpoints")
            .join(format!("run_{:03}.json", r.run));
        r.checkpoint.save(&path)?;
    }
    write_json(
        &out.join("manifest.json"),
        &ExperimentManifest::new(&panel, &outcome)?,
    )?;
    if outcome.results.is_empty() {
        return Err(Error::Training(format!(
            "all {} runs failed; first error: {}",
            outcome.failures.len(),
            outcome
                .failures
                .first()
                .map_or("none", |f| f.error.as_str())
        )));
    }
    Ok(())
}

fn forecast(a: ForecastArgs) -> Result<()> {
    let cfg = FileConfig::load(a.common.config.as_deref())?;
    let panel = load(&a.panel, &cfg)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let meta: crate::training::CheckpointModel = serde_json::from_value(ckpt.model.clone())?;
    let (forecasts, skipped) = forecast_from_checkpoint(&panel, &ckpt)?;
    for (k, reason) in &skipped {
        log::warn!("{k} not forecast: {reason}");
    }
    let first = meta.config.resolved_train_end(&panel);
    let path = a.common.out.join("forecasts.csv");
    let mut w = create(&path)?;
    write_forecasts(
        &mut w,
        &ckpt.config_hash,
        panel.epoch(),
        first,
        [(meta.run, &forecasts)],
    )?;
    finish(w, &path)
}

fn baseline_forecasts(
    panel: &PanelDataset,
    cfg: &FileConfig,
) -> Result<BTreeMap<DatarowKey, Vec<f64>>> {
    let train_end = cfg.training.resolved_train_end(panel);
    if train_end + cfg.training.horizon > panel.n_quarters() {
        return Err(Error::Config(format!(
            "train_end {train_end} + horizon {} exceeds the panel's {} quarters",
            cfg.training.horizon,
            panel.n_quarters()
        )));
    }
    Ok(baseline_forecast(panel, train_end, cfg.training.horizon, &cfg.baseline)?.forecasts)
}

fn baseline_hash(cfg: &FileConfig) -> Result<String> {
    let text =
        serde_json::to_string(&(&cfg.baseline, cfg.training.horizon, cfg.training.train_end))?;
    Ok(sha256_hex(text.as_bytes()))
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    if let Some(h) = a.horizon {
        cfg.training.horizon = h;
    }
    let panel = load(&a.panel, &cfg)?;
    let forecasts = baseline_forecasts(&panel, &cfg)?;
    let hash = baseline_hash(&cfg)?;
    let path = a.common.out.join("baseline.csv");
    let mut w = create(&path)?;
    write_forecasts(
        &mut w,
        &hash,
        panel.epoch(),
        cfg.training.resolved_train_end(&panel),
        [(0, &forecasts)],
    )?;
    finish(w, &path)
}

fn read_table(path: &Path, panel: &PanelDataset) -> Result<crate::training::ForecastTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_forecasts(file, panel.epoch())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    if let Some(m) = a.mape_mode {
        cfg.evaluation.mode = m;
    }
    let panel = load(&a.panel, &cfg)?;
    let table = read_table(&a.forecasts, &panel)?;
    let base = a
        .baseline
        .as_deref()
        .map(|p| read_table(p, &panel))
        .transpose()?;
    let base_runs = base
        .as_ref()
        .map(|b| crate::training::aggregate_runs(b.runs.values()));
    let base_mean = base_runs.transpose()?;
    if let Some(b) = &base {
        if b.first_quarter != table.first_quarter {
            return Err(Error::Validation(
                "forecast and baseline files cover different quarters".into(),
            ));
        }
    }
    let name = a
        .forecasts
        .file_stem()
        .map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
    let report = evaluate(
        &panel,
        &name,
        &table.runs,
        table.first_quarter,
        base_mean.as_ref(),
        None,
        &cfg.evaluation,
    )?;
    let hash = table.config_hash.clone().unwrap_or_default();
    let out = &a.common.out;
    write_json(
        &out.join("report.json"),
        &serde_json::json!({ "config_hash": hash, "report": report }),
    )?;
    let path = out.join("report.csv");
    let mut w = artifact(&path, &hash)?;
    write_report_csv(&report, &mut w)?;
    finish(w, &path)?;
    let path = out.join("density.csv");
    let mut w = artifact(&path, &hash)?;
    write_density_csv(&report.density, &mut w)?;
    finish(w, &path)
}

fn compare_cmd(a: CompareArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.common.config.as_deref())?;
    cfg.apply(None, &a.flags);
    if let Some(m) = a.mape_mode {
        cfg.evaluation.mode = m;
    }
    let panel = load(&a.panel, &cfg)?;
    let out = &a.common.out;
    let first = cfg.training.resolved_train_end(&panel);
    let baseline = match &a.baseline {
        Some(p) => {
            let t = read_table(p, &panel)?;
            if t.first_quarter != first {
                return Err(Error::Validation(
                    "baseline file starts at a different quarter".into(),
                ));
            }
            crate::training::aggregate_runs(t.runs.values())?
        }
        None => baseline_forecasts(&panel, &cfg)?,
    };
    let mut models = Vec::new();
    let mut hashes = Vec::new();
    if a.forecasts.is_empty() {
        let variants = if a.variant.is_empty() {
            ModelVariant::ALL.to_vec()
        } else {
            a.variant.clone()
        };
        for v in variants {
            let mut c = cfg.training.clone();
            c.variant = v;
            log::info!("training {v}");
            let outcome = run_experiment(&panel, &c)?;
            if outcome.results.is_empty() {
                return Err(Error::Training(format!("every {v} run failed")));
            }
            let runs = outcome
                .results
                .iter()
                .map(|r| (r.run, r.forecasts.clone()))
                .collect();
            let path = out.join("forecasts").join(format!("{v}.csv"));
            let mut w = create(&path)?;
            write_forecasts(
                &mut w,
                &outcome.config_hash,
                panel.epoch(),
                outcome.train_end,
                outcome.results.iter().map(|r| (r.run, &r.forecasts)),
            )?;
            finish(w, &path)?;
            hashes.push(outcome.config_hash.clone());
            models.push((v.name().to_string(), runs));
        }
    } else {
        for (name, path) in &a.forecasts {
            let t = read_table(path, &panel)?;
            if t.first_quarter != first {
                return Err(Error::Validation(format!(
                    "{name}: forecasts start at a different quarter"
                )));
            }
            hashes.push(t.config_hash.clone().unwrap_or_default());
            models.push((name.clone(), t.runs));
        }
    }
    let comparison = compare(&panel, &models, &baseline, first, &cfg.evaluation)?;
    let hash = sha256_hex(hashes.join(",").as_bytes());
    write_json(
        &out.join("comparison.json"),
        &serde_json::json!({ "config_hash": hash, "comparison": comparison }),
    )?;
    let world_path = out.join("comparison_world.csv");
    let seg_path = out.join("comparison_segments.csv");
    let mut ww = artifact(&world_path, &hash)?;
    let mut sw = artifact(&seg_path, &hash)?;
    write_comparison_csv(&comparison, &mut ww, &mut sw)?;
    finish(ww, &world_path)?;
    finish(sw, &seg_path)?;
    for r in &comparison.models {
        log::info!(
            "{}: world MAPE {:.3}% ({} vs baseline)",
            r.model,
            r.world_mape,
            r.world_improvement
                .map_or("undefined".into(), |v| format!("{v:+.1}%"))
        );
    }
    Ok(())
}
