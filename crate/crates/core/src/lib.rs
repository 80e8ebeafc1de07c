pub mod baseline;
pub mod cli;
pub mod curriculum;
pub mod error;
pub mod evaluation;
pub mod forecasters;
pub mod nn;
pub mod panel;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = nn::Tensor<f64>;
pub type ParameterSet = nn::ParameterSet<f64>;
pub type LstmForecaster = forecasters::LstmForecaster<f64>;
pub type DcnnForecaster = forecasters::DcnnForecaster<f64>;
pub type LstmExample = forecasters::LstmExample<f64>;
pub type DcnnExample = forecasters::DcnnExample<f64>;
pub type StlComponents = preprocess::StlComponents<f64>;
