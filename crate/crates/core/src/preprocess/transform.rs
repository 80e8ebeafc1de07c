use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Datarow, DatarowKey};
use crate::scalar::Scalar;

/// Statistics needed to undo [`forward_transform`] for one datarow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformState {
    pub key: DatarowKey,
    /// Mean of log revenue over training quarters only.
    pub log_mean: f64,
}

/// `log(x_t) - mean(log x_s for s < train_len)` over the whole slice.
pub fn log_demean<T: Scalar>(values: &[T], train_len: usize) -> Result<(Vec<T>, T)> {
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > T::zero())) {
        return Err(Error::Domain(format!("log transform of non-positive value {v}")));
    }
    let train_len = train_len.min(values.len());
    if train_len == 0 {
        return Err(Error::InsufficientHistory(
            "no training observations to de-mean on".into(),
        ));
    }
    let logs: Vec<T> = values.iter().map(|v| v.ln()).collect();
    let mean = logs[..train_len].iter().copied().sum::<T>() / T::lit(train_len as f64);
    Ok((logs.into_iter().map(|l| l - mean).collect(), mean))
}

pub fn exp_remean<T: Scalar>(values: &[T], log_mean: T) -> Vec<T> {
    values.iter().map(|v| (*v + log_mean).exp()).collect()
}

/// Log-transforms a row and removes the mean log revenue of quarters before
/// `train_end`. The output covers every observed quarter of the row.
pub fn forward_transform(row: &Datarow, train_end: usize) -> Result<(Vec<f64>, TransformState)> {
    let train_len = row.values_before(train_end).len();
    if train_len == 0 {
        return Err(Error::InsufficientHistory(format!(
            "{} has no observations before quarter {train_end}",
            row.key()
        )));
    }
    let (out, log_mean) = log_demean(row.revenue(), train_len)
        .map_err(|e| Error::Domain(format!("{}: {e}", row.key())))?;
    Ok((
        out,
        TransformState {
            key: row.key().clone(),
            log_mean,
        },
    ))
}

pub fn inverse_transform(series: &[f64], state: &TransformState) -> Vec<f64> {
    exp_remean(series, state.log_mean)
}
