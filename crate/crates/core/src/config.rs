//! Run configuration file (TOML) and its canonical hash.
//!
//! ```toml
//! [model]
//! hidden_dim = 8
//! alpha = 0.5
//!
//! [train]
//! rounds = 2000
//! mmd = "rbf"
//! lambda = 1.0
//!
//! [transport]
//! kind = "stream"
//!
//! [experiment]
//! fractions = [0.01, 0.05, 0.1]
//! seeds = [0, 1, 2, 3, 4]
//! ```
//!
//! Every field has a default, unknown keys are rejected, and the hash is taken
//! over the canonical JSON rendering of the parsed values, so formatting,
//! comments and key order in the file do not affect it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::experiment::ExperimentConfig;
use crate::model::{ModelConfig, SOFA_SYSTEMS};
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Model fields of [`ModelConfig`] except the feature count, which comes
/// from the cohort schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    pub n_channels: usize,
    pub n_sofa_classes: usize,
    pub alpha: f64,
    pub multi_channel: bool,
    pub sofa_heads: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(0);
        Self {
            hidden_dim: m.hidden_dim,
            n_channels: m.n_channels,
            n_sofa_classes: m.n_sofa_classes,
            alpha: m.alpha,
            multi_channel: m.multi_channel,
            sofa_heads: m.sofa_heads,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, n_features: usize) -> ModelConfig {
        ModelConfig {
            n_features,
            hidden_dim: self.hidden_dim,
            n_channels: self.n_channels,
            n_sofa_classes: self.n_sofa_classes,
            alpha: self.alpha,
            multi_channel: self.multi_channel,
            sofa_heads: self.sofa_heads,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    InProcess,
    #[default]
    Stream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    pub kind: TransportKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub transport: TransportSection,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let m = &self.model;
        if m.hidden_dim == 0 {
            return Err(ConfigError::Invalid(
                "model.hidden_dim must be positive".into(),
            ));
        }
        if m.n_channels != SOFA_SYSTEMS {
            return Err(ConfigError::Invalid(format!(
                "model.n_channels must be {SOFA_SYSTEMS}"
            )));
        }
        if !(m.alpha >= 0.0 && m.alpha.is_finite()) {
            return Err(ConfigError::Invalid(
                "model.alpha must be non-negative".into(),
            ));
        }
        self.experiment.validate().map_err(ConfigError::Invalid)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Canonical JSON rendering: fixed key order, shortest round-trip floats.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex sha256 of [`RunConfig::canonical`].
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Provenance block embedded in every emitted report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, cfg: &RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_hash: cfg.config_hash(),
            seeds: cfg.experiment.seeds.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmd::MmdKind;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.model.alpha, 0.5);
        assert_eq!(cfg.experiment.seeds.len(), 5);
    }

    #[test]
    fn fields_parse() {
        let cfg = RunConfig::from_toml(
            "[model]\nhidden_dim = 8\n[train]\nrounds = 7\nmmd = \"linear\"\ngrad_exchange = true\n[transport]\nkind = \"in-process\"\n",
        )
        .unwrap();
        assert_eq!(cfg.model.hidden_dim, 8);
        assert_eq!(cfg.train.rounds, 7);
        assert_eq!(cfg.train.mmd, MmdKind::Linear);
        assert!(cfg.train.grad_exchange);
        assert_eq!(cfg.transport.kind, TransportKind::InProcess);
        assert_eq!(cfg.model.model_config(27).input_dim(), 54);
    }

    #[test]
    fn hash_ignores_formatting_but_not_values() {
        let a = RunConfig::from_toml("[train]\nrounds = 7\nlr = 0.001\n").unwrap();
        let b = RunConfig::from_toml("# comment\n[train]\nlr=1e-3\n\nrounds=7").unwrap();
        let c = RunConfig::from_toml("[train]\nrounds = 8\n").unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.model.hidden_dim = 5;
        cfg.train.lambda = 0.25;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
    }

    #[test]
    fn rejects_invalid() {
        for text in [
            "[train]\nrounds = 0",
            "[train]\nbatch_size = 1",
            "[model]\nhidden_dim = 0",
            "[model]\nn_channels = 3",
            "[model]\nbogus = 1",
            "[experiment]\nfractions = [0.0]",
            "[experiment]\nseeds = []",
            "rounds = 3",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
