//! Versioned JSON checkpoints: parameters and Adam moments by name.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{AdamConfig, AdamState, ParameterSet, Tensor};

pub const CHECKPOINT_FORMAT: &str = "hiercast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    /// Model description needed to rebuild the network before loading.
    pub model: serde_json::Value,
    pub adam: AdamConfig,
    pub step: u64,
    pub parameters: Vec<TensorRecord>,
    pub first_moment: Vec<TensorRecord>,
    pub second_moment: Vec<TensorRecord>,
}

/// Trainable parameters together with their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub params: ParameterSet<T>,
    pub adam: AdamState<T>,
}

fn records<T: Scalar>(names: &[String], tensors: &[Tensor<T>]) -> Vec<TensorRecord> {
    names
        .iter()
        .zip(tensors)
        .map(|(name, t)| TensorRecord {
            name: name.clone(),
            shape: t.shape().to_vec(),
            values: t.data().iter().map(|v| v.as_f64()).collect(),
        })
        .collect()
}

fn restore<T: Scalar>(names: &[String], dst: &mut [Tensor<T>], src: &[TensorRecord], what: &str) -> Result<()> {
    if src.len() != names.len() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint {what} has {} tensors, model has {}",
            src.len(),
            names.len()
        )));
    }
    for ((name, t), rec) in names.iter().zip(dst.iter_mut()).zip(src) {
        if &rec.name != name {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint {what} tensor {:?} where model expects {name:?}",
                rec.name
            )));
        }
        if rec.shape != t.shape() || rec.values.len() != t.len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint {what} {name}: shape {:?} vs model {:?}",
                rec.shape,
                t.shape()
            )));
        }
        for (d, s) in t.data_mut().iter_mut().zip(&rec.values) {
            *d = T::lit(*s);
        }
    }
    Ok(())
}

impl<T: Scalar> ModelState<T> {
    pub fn new(params: ParameterSet<T>, adam: AdamConfig) -> Self {
        let adam = AdamState::new(&params, adam);
        Self { params, adam }
    }

    pub fn to_checkpoint(&self, config_hash: &str, model: serde_json::Value) -> Checkpoint {
        let names = self.params.names();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.into(),
            model,
            adam: self.adam.config,
            step: self.adam.step,
            parameters: records(names, self.params.values()),
            first_moment: records(names, &self.adam.first_moment),
            second_moment: records(names, &self.adam.second_moment),
        }
    }

    /// Loads values into an already-built model; names and shapes must match.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let names = self.params.names().to_vec();
        let mut staged = self.clone();
        restore(&names, staged.params.values_mut(), &ckpt.parameters, "parameters")?;
        restore(&names, &mut staged.adam.first_moment, &ckpt.first_moment, "first moment")?;
        restore(&names, &mut staged.adam.second_moment, &ckpt.second_moment, "second moment")?;
        staged.adam.step = ckpt.step;
        staged.adam.config = ckpt.adam;
        *self = staged;
        Ok(())
    }
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
