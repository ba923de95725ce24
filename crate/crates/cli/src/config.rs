//! Pipeline configuration. Every field defaults, so an empty file (or none)
//! gives the standard protocol. Precedence: defaults, then file, then flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use daedra_core::model::TrainConfig;
use daedra_core::selection::{DEFAULT_EPSILON, DEFAULT_SUBSAMPLE_FRACTION};
use daedra_core::splitter::SplitRatios;
use daedra_core::tokenizer::DEFAULT_VOCAB_SIZE;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Protocol values with a learning rate suited to a linear model.
    #[default]
    Desk,
    /// Protocol values verbatim.
    Protocol,
}

impl Profile {
    pub fn base(self) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig::desk(),
            Profile::Protocol => TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            seed: 0,
            ratios: SplitRatios::default().as_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: usize,
    pub min_frequency: u64,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection {
            vocab_size: DEFAULT_VOCAB_SIZE,
            min_frequency: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub seed: u64,
    pub fraction: f64,
    pub epsilon: f64,
    /// Run candidates concurrently; runtimes then stop being comparable.
    pub parallel: bool,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            seed: 0,
            fraction: DEFAULT_SUBSAMPLE_FRACTION,
            epsilon: DEFAULT_EPSILON,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub split: SplitSection,
    pub tokenizer: TokenizerSection,
    /// Field overrides applied on top of the profile's training config.
    pub train: serde_json::Map<String, serde_json::Value>,
    pub compare: CompareSection,
}

impl PipelineConfig {
    /// `.json` files parse as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&text).map_err(anyhow::Error::from)
        };
        parsed.with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn train_config(&self, profile: Option<Profile>) -> Result<TrainConfig> {
        let base = profile.unwrap_or(self.profile).base();
        let mut value = serde_json::to_value(base)?;
        let fields = value.as_object_mut().expect("TrainConfig serializes to an object");
        for (k, v) in &self.train {
            fields.insert(k.clone(), v.clone());
        }
        let config: TrainConfig = serde_json::from_value(value).context("invalid [train] section")?;
        config.validate()?;
        Ok(config)
    }
}
