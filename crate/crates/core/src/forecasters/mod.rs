//! The two model families and their categorical covariates.

mod dcnn;
mod features;
mod lstm;

pub use dcnn::{dcnn_forecast, dcnn_train_step, DcnnExample, DcnnForecaster, DcnnForecasterConfig};
pub use features::{FeatureEncoding, Vocabulary};
pub use lstm::{
    lstm_forecast, lstm_train_step, DecoderFeed, DecoderTrace, LstmExample, LstmForecaster,
    LstmForecasterConfig,
};
