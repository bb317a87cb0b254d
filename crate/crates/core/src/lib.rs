//! Two-party collaborative training for early sepsis recognition.
//!
//! Two hospitals each hold a private cohort of hourly EMR series. Each trains a
//! multi-channel GRU whose channels are supervised by per-system SOFA scores,
//! and the pair collaborates by averaging parameters every round and aligning
//! their hidden representations with maximum mean discrepancy. Raw windows
//! never leave a party; only parameters, hidden batches and their gradients do.
//!
//! Module map:
//!
//! - [`schema`], [`data`]: PSV ingestion, screening, imputation, windowing.
//! - [`sofa`]: per-system SOFA scoring.
//! - [`synth`]: deterministic synthetic cohorts.
//! - [`nn`]: tensors, GRU/linear kernels, cross-entropy, Adam, parameter codec.
//! - [`model`]: the multi-channel network and its local loss.
//! - [`mmd`]: linear and multi-kernel RBF MMD with gradients.
//! - [`train`], [`protocol`]: local training and the two-party round protocol.
//! - [`baselines`]: logistic regression and feed-forward comparators.
//! - [`metrics`]: AUROC, AUPRC, Min(Se,P+).
//! - [`config`], [`experiment`]: run configuration and the experiment matrix.

pub mod baselines;
pub mod config;
pub mod data;
pub mod experiment;
pub mod metrics;
pub mod mmd;
pub mod model;
pub mod nn;
pub mod protocol;
pub mod schema;
pub mod sofa;
pub mod synth;
pub mod train;

pub use data::{Cohort, PatientSeries, WindowSample};
pub use model::{ModelConfig, SofaNet};

pub use schema::FeatureSchema;
