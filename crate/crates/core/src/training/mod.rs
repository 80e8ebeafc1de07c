//! Walk-forward training: rolling windows with warm starts for the LSTM,
//! full-history training for the DCNN, curriculum staging, transfer
//! forecasts for out-of-sample rows and the multi-run experiment driver.

mod config;
mod io;
mod prepare;
mod runner;

pub use config::{sha256_hex, window_offsets, DcnnSettings, LstmSettings, ModelVariant, TrainingConfig};
pub use io::{read_forecasts, write_forecasts, ExperimentManifest, ForecastRecord, ForecastTable, SkippedRow};
pub use prepare::{prepare, PreparedPanel, PreparedRow};
pub use runner::{
    aggregate_runs, forecast_from_checkpoint, forecast_rows, run_experiment, train_run, CheckpointModel,
    ExampleProvenance, ExperimentOutcome, Forecaster, LossPoint, NoObserver, RunFailure, RunResult,
    TrainingObserver,
};
