use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curriculum::{
    CurriculumConfig, Grouping, Ordering, Weighting, DEFAULT_DCNN_BATCHES, DEFAULT_EPOCHS_PER_STAGE,
    DEFAULT_LSTM_BATCHES,
};
use crate::error::{Error, Result};
use crate::forecasters::{DcnnForecasterConfig, LstmForecasterConfig};
use crate::nn::AdamConfig;
use crate::panel::{PanelDataset, DEFAULT_MIN_HISTORY};
use crate::preprocess::StlConfig;

/// The seven model variants. Each LSTM variant adds one ingredient to the
/// previous one; the DCNN variants skip seasonal adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    #[default]
    LstmBasic,
    LstmCat,
    LstmSeasonal,
    LstmCurriculum,
    DcnnBasic,
    DcnnCat,
    DcnnCurriculum,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::LstmBasic,
        ModelVariant::LstmCat,
        ModelVariant::LstmSeasonal,
        ModelVariant::LstmCurriculum,
        ModelVariant::DcnnBasic,
        ModelVariant::DcnnCat,
        ModelVariant::DcnnCurriculum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::LstmBasic => "lstm_basic",
            ModelVariant::LstmCat => "lstm_cat",
            ModelVariant::LstmSeasonal => "lstm_seasonal",
            ModelVariant::LstmCurriculum => "lstm_curriculum",
            ModelVariant::DcnnBasic => "dcnn_basic",
            ModelVariant::DcnnCat => "dcnn_cat",
            ModelVariant::DcnnCurriculum => "dcnn_curriculum",
        }
    }

    pub fn is_lstm(self) -> bool {
        matches!(
            self,
            ModelVariant::LstmBasic | ModelVariant::LstmCat | ModelVariant::LstmSeasonal | ModelVariant::LstmCurriculum
        )
    }

    pub fn uses_covariates(self) -> bool {
        !matches!(self, ModelVariant::LstmBasic | ModelVariant::DcnnBasic)
    }

    pub fn uses_seasonality(self) -> bool {
        matches!(self, ModelVariant::LstmSeasonal | ModelVariant::LstmCurriculum)
    }

    pub fn uses_curriculum(self) -> bool {
        matches!(self, ModelVariant::LstmCurriculum | ModelVariant::DcnnCurriculum)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmSettings {
    pub hidden_size: usize,
}

impl Default for LstmSettings {
    fn default() -> Self {
        Self { hidden_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcnnSettings {
    pub n_layers: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub head_hidden: usize,
}

impl Default for DcnnSettings {
    fn default() -> Self {
        let d = DcnnForecasterConfig::default();
        Self {
            n_layers: d.n_layers,
            filters: d.filters,
            kernel_width: d.kernel_width,
            head_hidden: d.head_hidden,
        }
    }
}

/// Everything that determines a training run besides the panel and the run
/// index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub variant: ModelVariant,
    pub window_size: usize,
    pub horizon: usize,
    /// Exclusive end of the training quarters; the panel's own split when
    /// absent.
    pub train_end: Option<usize>,
    /// Epochs per rolling window for LSTM variants and total epochs for
    /// DCNN variants, when no curriculum is used.
    pub epochs_per_window: usize,
    pub batch_size: usize,
    pub runs: usize,
    pub seed_base: u64,
    /// Maximum number of runs trained concurrently.
    pub parallel: usize,
    pub min_history: usize,
    /// Curriculum batch count; 5 for LSTM and 8 for DCNN when absent.
    pub k: Option<usize>,
    pub p: usize,
    pub ordering: Ordering,
    pub grouping: Grouping,
    pub weighting: Weighting,
    pub lstm: LstmSettings,
    pub dcnn: DcnnSettings,
    pub clip_norm: f64,
    pub adam: AdamConfig,
    pub stl: StlConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::default(),
            window_size: 15,
            horizon: 4,
            train_end: None,
            epochs_per_window: 75,
            batch_size: 64,
            runs: 30,
            seed_base: 0,
            parallel: 1,
            min_history: DEFAULT_MIN_HISTORY,
            k: None,
            p: DEFAULT_EPOCHS_PER_STAGE,
            ordering: Ordering::default(),
            grouping: Grouping::default(),
            weighting: Weighting::default(),
            lstm: LstmSettings::default(),
            dcnn: DcnnSettings::default(),
            clip_norm: 5.0,
            adam: AdamConfig::default(),
            stl: StlConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn encoder_length(&self) -> usize {
        self.window_size.saturating_sub(self.horizon)
    }

    pub fn resolved_train_end(&self, panel: &PanelDataset) -> usize {
        self.train_end.unwrap_or_else(|| panel.train_end())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed_base.wrapping_add(run as u64)
    }

    pub fn curriculum(&self) -> CurriculumConfig {
        let default_k = if self.variant.is_lstm() {
            DEFAULT_LSTM_BATCHES
        } else {
            DEFAULT_DCNN_BATCHES
        };
        CurriculumConfig {
            k: self.k.unwrap_or(default_k),
            ordering: self.ordering,
            grouping: self.grouping,
            weighting: self.weighting,
            epochs_per_stage: self.p,
        }
    }

    pub fn lstm_config(&self, covariate_size: usize) -> LstmForecasterConfig {
        LstmForecasterConfig {
            hidden_size: self.lstm.hidden_size,
            encoder_length: self.encoder_length(),
            horizon: self.horizon,
            use_covariates: self.variant.uses_covariates(),
            covariate_size: if self.variant.uses_covariates() { covariate_size } else { 0 },
            use_seasonality: self.variant.uses_seasonality(),
            clip_norm: self.clip_norm,
        }
    }

    pub fn dcnn_config(&self, covariate_size: usize) -> DcnnForecasterConfig {
        DcnnForecasterConfig {
            n_layers: self.dcnn.n_layers,
            filters: self.dcnn.filters,
            kernel_width: self.dcnn.kernel_width,
            head_hidden: self.dcnn.head_hidden,
            use_covariates: self.variant.uses_covariates(),
            covariate_size: if self.variant.uses_covariates() { covariate_size } else { 0 },
            clip_norm: self.clip_norm,
        }
    }

    /// Checks the configuration on its own.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.window_size <= self.horizon {
            return Err(Error::Config(format!(
                "window_size {} must exceed horizon {} >= 1",
                self.window_size, self.horizon
            )));
        }
        if self.batch_size == 0 || self.runs == 0 || self.parallel == 0 {
            return Err(Error::Config("batch_size, runs and parallel must be >= 1".into()));
        }
        if self.variant.uses_curriculum() {
            if self.p == 0 {
                return Err(Error::Config("curriculum p must be >= 1".into()));
            }
            if self.k == Some(0) {
                return Err(Error::Config("curriculum k must be >= 1".into()));
            }
        } else if self.epochs_per_window == 0 {
            return Err(Error::Config("epochs_per_window must be >= 1".into()));
        }
        self.lstm_config(1).validate()?;
        self.dcnn_config(1).validate()?;
        Ok(())
    }

    /// Checks the configuration against a panel.
    pub fn validate_for(&self, panel: &PanelDataset) -> Result<()> {
        self.validate()?;
        let train_end = self.resolved_train_end(panel);
        if train_end + self.horizon > panel.n_quarters() {
            return Err(Error::Config(format!(
                "train_end {train_end} + horizon {} exceeds the panel's {} quarters",
                self.horizon,
                panel.n_quarters()
            )));
        }
        if self.variant.is_lstm() && train_end < self.window_size {
            return Err(Error::Config(format!(
                "train_end {train_end} leaves no rolling window of size {}",
                self.window_size
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        sha256_hex(text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Window start offsets `0..=train_end - window_size`.
pub fn window_offsets(train_end: usize, window_size: usize) -> std::ops::Range<usize> {
    if window_size == 0 || train_end < window_size {
        0..0
    } else {
        0..train_end - window_size + 1
    }
}
