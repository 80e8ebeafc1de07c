use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvaluationOptions;
use crate::panel::{CsvSchema, SyntheticSpec};
use crate::training::{ModelVariant, TrainingConfig};

use super::TrainingFlags;

pub const CONFIG_VERSION: u32 = 1;

/// The JSON configuration file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub version: u32,
    pub panel: CsvSchema,
    pub synthetic: SyntheticSpec,
    pub training: TrainingConfig,
    pub baseline: BaselineConfig,
    pub evaluation: EvaluationOptions,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            panel: CsvSchema::default(),
            synthetic: SyntheticSpec::default(),
            training: TrainingConfig::default(),
            baseline: BaselineConfig::default(),
            evaluation: EvaluationOptions::default(),
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: FileConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "{}: config version {} is not supported (expected {CONFIG_VERSION})",
                path.display(),
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Command-line flags override the file.
    pub fn apply(&mut self, variant: Option<ModelVariant>, f: &TrainingFlags) {
        let t = &mut self.training;
        if let Some(v) = variant {
            t.variant = v;
        }
        if let Some(v) = f.seed {
            t.seed_base = v;
        }
        if let Some(v) = f.runs {
            t.runs = v;
        }
        if let Some(v) = f.k {
            t.k = Some(v);
        }
        if let Some(v) = f.p {
            t.p = v;
        }
        if let Some(v) = f.ordering {
            t.ordering = v;
        }
        if let Some(v) = f.grouping {
            t.grouping = v;
        }
        if let Some(v) = f.window {
            t.window_size = v;
        }
        if let Some(v) = f.horizon {
            t.horizon = v;
            self.panel.horizon = v;
        }
        if let Some(v) = f.parallel {
            t.parallel = v;
        }
    }
}
