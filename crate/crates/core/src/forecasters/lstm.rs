//! Encoder-decoder LSTM forecaster.
//!
//! The encoder consumes `encoder_length` transformed observations; its final
//! `(h, c)` initializes the decoder. Each decoder step emits one forecast via
//! a dense head. During training the decoder is fed the previous actual value
//! (teacher forcing); at inference it is fed its own previous output. The
//! first decoder input is the last encoder observation in both cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, mae_loss, AdamConfig, Dense, LstmCache, LstmCell, ModelState, ParameterSet};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmForecasterConfig {
    pub hidden_size: usize,
    pub encoder_length: usize,
    pub horizon: usize,
    pub use_covariates: bool,
    /// Length of the one-hot covariate vector when `use_covariates` is set.
    pub covariate_size: usize,
    /// Train on deseasonalized data and reseasonalize forecasts.
    pub use_seasonality: bool,
    /// Global gradient-norm clip applied before each update.
    pub clip_norm: f64,
}

impl Default for LstmForecasterConfig {
    fn default() -> Self {
        Self {
            hidden_size: 64,
            encoder_length: 11,
            horizon: 4,
            use_covariates: false,
            covariate_size: 0,
            use_seasonality: false,
            clip_norm: 5.0,
        }
    }
}

impl LstmForecasterConfig {
    pub fn input_size(&self) -> usize {
        1 + if self.use_covariates { self.covariate_size } else { 0 }
    }

    pub fn window_size(&self) -> usize {
        self.encoder_length + self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.encoder_length == 0 || self.horizon == 0 {
            return Err(Error::Config(
                "lstm hidden_size, encoder_length and horizon must be >= 1".into(),
            ));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("lstm clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// One training window: encoder inputs and the following decoder targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmExample<T> {
    pub encoder_inputs: Vec<T>,
    pub targets: Vec<T>,
    pub covariates: Option<Vec<T>>,
}

/// What the decoder consumes at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderFeed {
    TeacherForcing,
    Autoregressive,
}

/// Decoder inputs and outputs of one decoding pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTrace<T> {
    pub inputs: Vec<T>,
    pub outputs: Vec<T>,
}

struct Pass<T> {
    encoder: Vec<LstmCache<T>>,
    decoder: Vec<LstmCache<T>>,
    hidden: Vec<Vec<T>>,
    trace: DecoderTrace<T>,
}

#[derive(Debug, Clone)]
pub struct LstmForecaster<T> {
    config: LstmForecasterConfig,
    encoder: LstmCell,
    decoder: LstmCell,
    head: Dense,
    state: ModelState<T>,
}

impl<T: Scalar> LstmForecaster<T> {
    pub fn new(config: LstmForecasterConfig, adam: AdamConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut params = ParameterSet::new();
        let input = config.input_size();
        let hidden = config.hidden_size;
        let encoder = LstmCell::new(&mut params, "encoder", input, hidden, &mut rng)?;
        let decoder = LstmCell::new(&mut params, "decoder", input, hidden, &mut rng)?;
        let head = Dense::new(&mut params, "head", hidden, 1, &mut rng)?;
        Ok(Self {
            config,
            encoder,
            decoder,
            head,
            state: ModelState::new(params, adam),
        })
    }

    pub fn config(&self) -> &LstmForecasterConfig {
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

    pub fn encoder_cell(&self) -> &LstmCell {
        &self.encoder
    }

    pub fn decoder_cell(&self) -> &LstmCell {
        &self.decoder
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    fn step_input(&self, value: T, covariates: Option<&[T]>) -> Result<Vec<T>> {
        let mut x = Vec::with_capacity(self.config.input_size());
        x.push(value);
        match (self.config.use_covariates, covariates) {
            (true, Some(c)) if c.len() == self.config.covariate_size => x.extend_from_slice(c),
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
        Ok(x)
    }

    fn run(
        &self,
        encoder_inputs: &[T],
        covariates: Option<&[T]>,
        feed: DecoderFeed,
        targets: &[T],
        horizon: usize,
    ) -> Result<Pass<T>> {
        if encoder_inputs.len() != self.config.encoder_length {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects {} inputs, got {}",
                self.config.encoder_length,
                encoder_inputs.len()
            )));
        }
        let params = &self.state.params;
        let (mut h, mut c) = self.encoder.zero_state();
        let mut encoder = Vec::with_capacity(encoder_inputs.len());
        for &v in encoder_inputs {
            let x = self.step_input(v, covariates)?;
            let (h2, c2, cache) = self.encoder.forward(params, &x, &h, &c)?;
            encoder.push(cache);
            h = h2;
            c = c2;
        }
        let mut decoder = Vec::with_capacity(horizon);
        let mut hidden = Vec::with_capacity(horizon);
        let mut trace = DecoderTrace {
            inputs: Vec::with_capacity(horizon),
            outputs: Vec::with_capacity(horizon),
        };
        let mut feed_value = *encoder_inputs.last().expect("encoder_length >= 1");
        for step in 0..horizon {
            let x = self.step_input(feed_value, covariates)?;
            let (h2, c2, cache) = self.decoder.forward(params, &x, &h, &c)?;
            let y = self.head.forward(params, &h2)?[0];
            trace.inputs.push(feed_value);
            trace.outputs.push(y);
            decoder.push(cache);
            hidden.push(h2.clone());
            h = h2;
            c = c2;
            feed_value = match feed {
                DecoderFeed::TeacherForcing => targets[step],
                DecoderFeed::Autoregressive => y,
            };
        }
        Ok(Pass {
            encoder,
            decoder,
            hidden,
            trace,
        })
    }

    /// Decoder inputs and outputs for one example under the given feed mode.
    pub fn decode_trace(&self, example: &LstmExample<T>, feed: DecoderFeed) -> Result<DecoderTrace<T>> {
        self.check_targets(example)?;
        Ok(self
            .run(
                &example.encoder_inputs,
                example.covariates.as_deref(),
                feed,
                &example.targets,
                self.config.horizon,
            )?
            .trace)
    }

    fn check_targets(&self, example: &LstmExample<T>) -> Result<()> {
        if example.targets.len() != self.config.horizon {
            return Err(Error::ShapeMismatch(format!(
                "example has {} targets, horizon is {}",
                example.targets.len(),
                self.config.horizon
            )));
        }
        Ok(())
    }

    /// Teacher-forced MAE over a batch without updating the model.
    pub fn loss(&self, batch: &[LstmExample<T>]) -> Result<T> {
        let mut total = T::zero();
        let mut count = 0usize;
        for ex in batch {
            let trace = self.decode_trace(ex, DecoderFeed::TeacherForcing)?;
            let (l, _) = mae_loss(&trace.outputs, &ex.targets)?;
            total += l * T::lit(ex.targets.len() as f64);
            count += ex.targets.len();
        }
        Ok(if count == 0 { T::zero() } else { total / T::lit(count as f64) })
    }

    /// Accumulates teacher-forced MAE gradients for `batch` into the
    /// parameter gradient buffers (after zeroing them). Returns the loss.
    pub fn accumulate_gradients(&mut self, batch: &[LstmExample<T>]) -> Result<T> {
        self.state.params.zero_grad();
        if batch.is_empty() {
            return Ok(T::zero());
        }
        let horizon = self.config.horizon;
        // gradient of the mean over every output in the batch
        let weight = T::one() / T::lit(batch.len() as f64);
        let mut total = T::zero();
        let hidden = self.config.hidden_size;
        for ex in batch {
            self.check_targets(ex)?;
            let pass = self.run(
                &ex.encoder_inputs,
                ex.covariates.as_deref(),
                DecoderFeed::TeacherForcing,
                &ex.targets,
                horizon,
            )?;
            let (l, dy) = mae_loss(&pass.trace.outputs, &ex.targets)?;
            total += l;
            let params = &mut self.state.params;
            let mut dh_next = vec![T::zero(); hidden];
            let mut dc_next = vec![T::zero(); hidden];
            for step in (0..pass.decoder.len()).rev() {
                let dh_head = self.head.backward(params, &pass.hidden[step], &[dy[step] * weight]);
                let dh: Vec<T> = dh_head.iter().zip(&dh_next).map(|(a, b)| *a + *b).collect();
                let (_, dh_prev, dc_prev) = self.decoder.backward(params, &pass.decoder[step], &dh, &dc_next);
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            for cache in pass.encoder.iter().rev() {
                let (_, dh_prev, dc_prev) = self.encoder.backward(params, cache, &dh_next, &dc_next);
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
        }
        Ok(total / T::lit(batch.len() as f64))
    }

    /// One Adam update on the teacher-forced MAE of `batch`. Returns the
    /// loss before the update.
    pub fn train_step(&mut self, batch: &[LstmExample<T>]) -> Result<T> {
        let loss = self.accumulate_gradients(batch)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite lstm loss {loss} on a batch of {} examples",
                batch.len()
            )));
        }
        self.state.params.clip_grad_norm(T::lit(self.config.clip_norm));
        adam_step(&mut self.state.params, &mut self.state.adam)?;
        Ok(loss)
    }

    /// Autoregressive forecast from the last `encoder_length` values of
    /// `history`.
    pub fn forecast(&self, history: &[T], covariates: Option<&[T]>, horizon: usize) -> Result<Vec<T>> {
        if horizon == 0 {
            return Ok(Vec::new());
        }
        let need = self.config.encoder_length;
        if history.len() < need {
            return Err(Error::InsufficientHistory(format!(
                "lstm forecast needs {need} observations, got {}",
                history.len()
            )));
        }
        let inputs = &history[history.len() - need..];
        Ok(self
            .run(inputs, covariates, DecoderFeed::Autoregressive, &[], horizon)?
            .trace
            .outputs)
    }
}

/// Functional form of [`LstmForecaster::train_step`].
pub fn lstm_train_step<T: Scalar>(model: &mut LstmForecaster<T>, batch: &[LstmExample<T>]) -> Result<T> {
    model.train_step(batch)
}

pub fn lstm_forecast<T: Scalar>(
    model: &LstmForecaster<T>,
    history: &[T],
    covariates: Option<&[T]>,
    horizon: usize,
) -> Result<Vec<T>> {
    model.forecast(history, covariates, horizon)
}
