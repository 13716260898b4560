//! Pipeline configuration file.
//!
//! One TOML document with a section per stage. Every field has a default and
//! unknown keys are rejected, so an empty file is a valid configuration.
//!
//! ```toml
//! [rules]
//! dh_man_km = 8.0
//!
//! [imm]
//! label_threshold = 0.5
//!
//! [[io.inputs]]
//! path = "supgp.txt"
//! source = "SUPGP"
//! ```

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::cascade::CascadeConfig;
use crate::dynamics::ForceConfig;
use crate::features::FeatureConfig;
use crate::filter::{FilterConfig, ImmConfig, ModeSet, ObsNoise, UkfConfig};
use crate::rules::RuleThresholds;
use crate::tle::IngestSource;
use crate::windowing::{SplitConfig, WindowConfig};

/// Environment variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "ORBLABEL_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Archives read in addition to those named on the command line.
    pub inputs: Vec<IngestSource>,
    /// Where output files go when a subcommand gets no explicit path.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub force: ForceConfig,
    pub rules: RuleThresholds,
    pub ukf: UkfConfig,
    pub imm: ImmConfig,
    pub modes: ModeSet,
    pub obs_noise: ObsNoise,
    pub features: FeatureConfig,
    pub windows: WindowConfig,
    pub split: SplitConfig,
    pub cascade: CascadeConfig,
    pub io: IoConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg = Self::from_toml(&text).map_err(|message| ConfigError::Parse { path: path.to_path_buf(), message })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Explicit path first, then the environment variable, then defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>), ConfigError> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        match path {
            Some(p) => Ok((Self::load(&p)?, Some(p))),
            None => Ok((Self::default(), None)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialize")
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            force: self.force.clone(),
            ukf: self.ukf,
            imm: self.imm,
            modes: self.modes,
            obs_noise: self.obs_noise,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.filter_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.rules.validate().map_err(ConfigError::Invalid)?;
        let f = &self.features;
        if !(f.bstar_clip[0] < f.bstar_clip[1]) || !(f.dt_clip_hours[0] < f.dt_clip_hours[1]) {
            return Err(ConfigError::Invalid("feature clip bounds must be increasing".into()));
        }
        if self.windows.length == 0 || self.windows.stride == 0 {
            return Err(ConfigError::Invalid("window length and stride must be positive".into()));
        }
        let s = &self.split;
        if !(s.train_fraction >= 0.0 && s.val_fraction >= 0.0 && s.train_fraction + s.val_fraction <= 1.0) {
            return Err(ConfigError::Invalid("split fractions must be non-negative and sum to at most 1".into()));
        }
        if !self.cascade.tiers.rule {
            return Err(ConfigError::Invalid("the rule tier cannot be disabled".into()));
        }
        if let Some(sigma) = &self.cascade.score_sigma {
            if sigma.iter().any(|s| !(*s > 0.0)) {
                return Err(ConfigError::Invalid("score_sigma entries must be positive".into()));
            }
        }
        Ok(())
    }
}
