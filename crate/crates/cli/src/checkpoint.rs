//! Checkpoint directory: `params.bin` in the parameter codec format and a
//! `model.json` sidecar describing how to rebuild and feed the model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sofanet::baselines::{Logistic, Mlp};
use sofanet::data::{EncodedSet, WINDOW};
use sofanet::experiment::Preprocessor;
use sofanet::nn::{deserialize_params, serialize_params, ParamSet};
use sofanet::{ModelConfig, SofaNet};

use crate::CliError;

pub const PARAMS_FILE: &str = "params.bin";
pub const SIDECAR_FILE: &str = "model.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum ModelKind {
    Lr,
    Nn,
    Gru,
    Sofanet,
    SofanetWomc,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Nn => "nn",
            ModelKind::Gru => "gru",
            ModelKind::Sofanet => "sofanet",
            ModelKind::SofanetWomc => "sofanet-womc",
        }
    }

    /// Network config for the recurrent kinds.
    pub fn net_config(self, base: ModelConfig) -> Option<ModelConfig> {
        match self {
            ModelKind::Gru => Some(base.plain_gru()),
            ModelKind::Sofanet => Some(base),
            ModelKind::SofanetWomc => Some(base.without_multi_channel()),
            ModelKind::Lr | ModelKind::Nn => None,
        }
    }
}

/// Flattened window length `6 · 2F` read by the LR and NN baselines.
pub fn flat_width(model: &ModelConfig) -> usize {
    WINDOW * model.input_dim()
}

impl ModelKind {
    fn baseline_template(self, model: &ModelConfig) -> ParamSet {
        match self {
            ModelKind::Nn => Mlp::init(flat_width(model), model.hidden_dim, 0).params,
            _ => Logistic::zeros(flat_width(model)).params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: ModelKind,
    pub model: ModelConfig,
    pub seed: u64,
    pub round: usize,
    pub config_hash: String,
    pub schema_hash: String,
    pub preprocessor: Preprocessor,
}

pub struct Checkpoint {
    pub sidecar: Sidecar,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let p = dir.join(PARAMS_FILE);
        fs::write(&p, serialize_params(&self.params)).map_err(|e| CliError::io(&p, e))?;
        crate::write_json(&dir.join(SIDECAR_FILE), &self.sidecar)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let s = dir.join(SIDECAR_FILE);
        let text = fs::read_to_string(&s).map_err(|e| CliError::io(&s, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", s.display())))?;
        let p = dir.join(PARAMS_FILE);
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        let params = match sidecar.kind.net_config(sidecar.model) {
            Some(mc) => {
                let net = SofaNet::new(mc).map_err(CliError::validation)?;
                deserialize_params(&bytes, &net.zero_params()).map_err(CliError::validation)?
            }
            None => {
                let template = sidecar.kind.baseline_template(&sidecar.model);
                deserialize_params(&bytes, &template).map_err(CliError::validation)?
            }
        };
        Ok(Self { sidecar, params })
    }

    /// Positive-class probability for every window of `set`.
    pub fn score(&self, set: &EncodedSet) -> Result<Vec<f64>, CliError> {
        match self.sidecar.kind.net_config(self.sidecar.model) {
            Some(mc) => {
                let net = SofaNet::new(mc).map_err(CliError::validation)?;
                net.score_set(&self.params, set, 512)
                    .map_err(CliError::runtime)
            }
            None => {
                let x = sofanet::baselines::FlatData::from_set(set).x;
                let width = flat_width(&self.sidecar.model);
                if width != x.ncols() {
                    return Err(CliError::Validation(format!(
                        "checkpoint expects {width} input values per window, cohort gives {}",
                        x.ncols()
                    )));
                }
                if self.sidecar.kind == ModelKind::Lr {
                    Ok(Logistic {
                        params: self.params.clone(),
                    }
                    .predict_proba(x.view()))
                } else {
                    Mlp {
                        params: self.params.clone(),
                    }
                    .predict_proba(x.view())
                    .map_err(CliError::runtime)
                }
            }
        }
    }
}
