//! Dilated causal CNN forecaster.
//!
//! A stack of width-`kernel_width` causal convolutions with dilations
//! `1, 2, 4, ..` and ReLU activations feeds a dense ReLU layer and a scalar
//! output, applied at a single time position to predict the next value.
//! Covariates enter as constant extra input channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    adam_step, mae_loss, relu_backward, relu_in_place, AdamConfig, CausalConv1d, Dense, ModelState,
    ParameterSet, Tensor,
};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcnnForecasterConfig {
    pub n_layers: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub head_hidden: usize,
    pub use_covariates: bool,
    pub covariate_size: usize,
    pub clip_norm: f64,
}

impl Default for DcnnForecasterConfig {
    fn default() -> Self {
        Self {
            n_layers: 10,
            filters: 6,
            kernel_width: 2,
            head_hidden: 128,
            use_covariates: false,
            covariate_size: 0,
            clip_norm: 5.0,
        }
    }
}

impl DcnnForecasterConfig {
    pub fn input_channels(&self) -> usize {
        1 + if self.use_covariates { self.covariate_size } else { 0 }
    }

    /// Dilation of layer `l` is `2^l`.
    pub fn dilations(&self) -> Vec<usize> {
        (0..self.n_layers).map(|l| 1usize << l).collect()
    }

    /// Inputs visible to one output: `1 + sum((width - 1) * dilation)`,
    /// which is `2^n_layers` for width 2.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .dilations()
            .iter()
            .map(|d| (self.kernel_width - 1) * d)
            .sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.filters == 0 || self.kernel_width == 0 || self.head_hidden == 0 {
            return Err(Error::Config("dcnn layer sizes must be >= 1".into()));
        }
        if self.n_layers > 20 {
            return Err(Error::Config(format!("dcnn n_layers {} > 20", self.n_layers)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("dcnn clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Teacher-forced training example. `targets[j]` is the value following
/// position `inputs.len() - targets.len() + j`; a single target is the
/// classic (history up to t, value at t+1) pair, and several targets share
/// one forward pass over the same history.
#[derive(Debug, Clone, PartialEq)]
pub struct DcnnExample<T> {
    pub inputs: Vec<T>,
    pub targets: Vec<T>,
    pub covariates: Option<Vec<T>>,
}

struct Activations<T> {
    /// `layers[0]` is the input, `layers[l + 1]` the ReLU output of conv `l`.
    layers: Vec<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct DcnnForecaster<T> {
    config: DcnnForecasterConfig,
    convs: Vec<CausalConv1d>,
    hidden: Dense,
    output: Dense,
    state: ModelState<T>,
}

impl<T: Scalar> DcnnForecaster<T> {
    pub fn new(config: DcnnForecasterConfig, adam: AdamConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut params = ParameterSet::new();
        let mut convs = Vec::with_capacity(config.n_layers);
        let mut channels = config.input_channels();
        for (l, d) in config.dilations().into_iter().enumerate() {
            convs.push(CausalConv1d::new(
                &mut params,
                &format!("conv{l}"),
                channels,
                config.filters,
                config.kernel_width,
                d,
                &mut rng,
            )?);
            channels = config.filters;
        }
        let hidden = Dense::new(&mut params, "head.hidden", config.filters, config.head_hidden, &mut rng)?;
        let output = Dense::new(&mut params, "head.output", config.head_hidden, 1, &mut rng)?;
        Ok(Self {
            config,
            convs,
            hidden,
            output,
            state: ModelState::new(params, adam),
        })
    }

    pub fn config(&self) -> &DcnnForecasterConfig {
        &self.config
    }

    pub fn state(&self) -> &ModelState<T> {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ModelState<T> {
        &mut self.state
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.state.params
    }

    pub fn convs(&self) -> &[CausalConv1d] {
        &self.convs
    }

    pub fn head_layers(&self) -> (&Dense, &Dense) {
        (&self.hidden, &self.output)
    }

    fn input_tensor(&self, series: &[T], covariates: Option<&[T]>) -> Result<Tensor<T>> {
        if series.is_empty() {
            return Err(Error::InsufficientHistory("dcnn needs a non-empty history".into()));
        }
        let steps = series.len();
        let channels = self.config.input_channels();
        let mut data = Vec::with_capacity(channels * steps);
        data.extend_from_slice(series);
        match (self.config.use_covariates, covariates) {
            (true, Some(c)) if c.len() == self.config.covariate_size => {
                for v in c {
                    data.extend(std::iter::repeat_n(*v, steps));
                }
            }
            (true, Some(c)) => {
                return Err(Error::ShapeMismatch(format!(
                    "covariate length {} != {}",
                    c.len(),
                    self.config.covariate_size
                )))
            }
            (true, None) => return Err(Error::ShapeMismatch("model expects covariates".into())),
            (false, _) => {}
        }
        Tensor::from_vec(&[channels, steps], data)
    }

    fn features(&self, x: Tensor<T>) -> Result<Activations<T>> {
        let params = &self.state.params;
        let mut layers = Vec::with_capacity(self.convs.len() + 1);
        layers.push(x);
        for conv in &self.convs {
            let mut y = conv.forward(params, layers.last().expect("input present"))?;
            relu_in_place(y.data_mut());
            layers.push(y);
        }
        Ok(Activations { layers })
    }

    fn column(t: &Tensor<T>, pos: usize) -> Vec<T> {
        (0..t.shape()[0]).map(|c| t.at2(c, pos)).collect()
    }

    fn head(&self, feature: &[T]) -> Result<(Vec<T>, T)> {
        let params = &self.state.params;
        let mut hidden = self.hidden.forward(params, feature)?;
        relu_in_place(&mut hidden);
        let y = self.output.forward(params, &hidden)?[0];
        Ok((hidden, y))
    }

    /// Next-value predictions at every position of `series`.
    pub fn predict_positions(&self, series: &[T], covariates: Option<&[T]>) -> Result<Vec<T>> {
        let acts = self.features(self.input_tensor(series, covariates)?)?;
        let top = acts.layers.last().expect("features present");
        (0..series.len())
            .map(|pos| self.head(&Self::column(top, pos)).map(|(_, y)| y))
            .collect()
    }

    /// Prediction of the value following the last element of `series`.
    pub fn predict_next(&self, series: &[T], covariates: Option<&[T]>) -> Result<T> {
        let acts = self.features(self.input_tensor(series, covariates)?)?;
        let top = acts.layers.last().expect("features present");
        Ok(self.head(&Self::column(top, series.len() - 1))?.1)
    }

    fn check_example(ex: &DcnnExample<T>) -> Result<()> {
        if ex.targets.is_empty() || ex.targets.len() > ex.inputs.len() {
            return Err(Error::ShapeMismatch(format!(
                "dcnn example with {} inputs and {} targets",
                ex.inputs.len(),
                ex.targets.len()
            )));
        }
        Ok(())
    }

    /// Teacher-forced MAE over a batch without updating the model.
    pub fn loss(&self, batch: &[DcnnExample<T>]) -> Result<T> {
        let mut total = T::zero();
        let mut count = 0usize;
        for ex in batch {
            Self::check_example(ex)?;
            let preds = self.predict_positions(&ex.inputs, ex.covariates.as_deref())?;
            let offset = ex.inputs.len() - ex.targets.len();
            for (p, t) in preds[offset..].iter().zip(&ex.targets) {
                total += (*p - *t).abs();
            }
            count += ex.targets.len();
        }
        Ok(if count == 0 { T::zero() } else { total / T::lit(count as f64) })
    }

    /// Zeroes and fills the gradient buffers with the gradient of the mean
    /// absolute error over every target in `batch`. Returns that loss.
    pub fn accumulate_gradients(&mut self, batch: &[DcnnExample<T>]) -> Result<T> {
        self.state.params.zero_grad();
        let count: usize = batch.iter().map(|e| e.targets.len()).sum();
        if count == 0 {
            return Ok(T::zero());
        }
        let mut total = T::zero();
        for ex in batch {
            Self::check_example(ex)?;
            let acts = self.features(self.input_tensor(&ex.inputs, ex.covariates.as_deref())?)?;
            let top = acts.layers.last().expect("features present");
            let steps = ex.inputs.len();
            let offset = steps - ex.targets.len();
            let mut d_top = Tensor::zeros(top.shape());
            let mut heads = Vec::with_capacity(ex.targets.len());
            let mut preds = Vec::with_capacity(ex.targets.len());
            for pos in offset..steps {
                let feature = Self::column(top, pos);
                let (hidden, y) = self.head(&feature)?;
                heads.push((feature, hidden));
                preds.push(y);
            }
            let (l, dy) = mae_loss(&preds, &ex.targets)?;
            let n_ex = T::lit(ex.targets.len() as f64);
            total += l * n_ex;
            // rescale from per-example mean to batch-wide mean
            let weight = n_ex / T::lit(count as f64);
            let params = &mut self.state.params;
            for (j, (feature, hidden)) in heads.iter().enumerate() {
                let mut dh = self.output.backward(params, hidden, &[dy[j] * weight]);
                relu_backward(hidden, &mut dh);
                let dfeat = self.hidden.backward(params, feature, &dh);
                for (c, g) in dfeat.into_iter().enumerate() {
                    let w = top.shape()[1];
                    d_top.data_mut()[c * w + offset + j] += g;
                }
            }
            let mut grad = d_top;
            for (l, conv) in self.convs.iter().enumerate().rev() {
                relu_backward(acts.layers[l + 1].data(), grad.data_mut());
                grad = conv.backward(params, &acts.layers[l], &grad)?;
            }
        }
        Ok(total / T::lit(count as f64))
    }

    pub fn train_step(&mut self, batch: &[DcnnExample<T>]) -> Result<T> {
        let loss = self.accumulate_gradients(batch)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite dcnn loss {loss} on a batch of {} examples",
                batch.len()
            )));
        }
        self.state.params.clip_grad_norm(T::lit(self.config.clip_norm));
        adam_step(&mut self.state.params, &mut self.state.adam)?;
        Ok(loss)
    }

    /// Predicts `horizon` values, appending each prediction to the history
    /// before the next one.
    pub fn forecast(&self, history: &[T], covariates: Option<&[T]>, horizon: usize) -> Result<Vec<T>> {
        if history.is_empty() {
            return Err(Error::InsufficientHistory("dcnn forecast needs history".into()));
        }
        let mut series = history.to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let y = self.predict_next(&series, covariates)?;
            out.push(y);
            series.push(y);
        }
        Ok(out)
    }
}

pub fn dcnn_train_step<T: Scalar>(model: &mut DcnnForecaster<T>, batch: &[DcnnExample<T>]) -> Result<T> {
    model.train_step(batch)
}

pub fn dcnn_forecast<T: Scalar>(
    model: &DcnnForecaster<T>,
    history: &[T],
    covariates: Option<&[T]>,
    horizon: usize,
) -> Result<Vec<T>> {
    model.forecast(history, covariates, horizon)
}
