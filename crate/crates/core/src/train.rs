//! Local training loops: mini-batch Adam over an encoded window set, and
//! the two-stage finetune comparator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EncodedSet;
use crate::mmd::MmdKind;
use crate::model::{Batch, ModelError, SofaNet};
use crate::nn::{AdamConfig, AdamState, NnError, ParamSet};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptySet,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Optimizer steps (one batch each).
    pub rounds: usize,
    pub seed: u64,
    pub mmd: MmdKind,
    pub lambda: f64,
    pub grad_exchange: bool,
    /// Average parameters after every `average_every` rounds.
    pub average_every: usize,
    /// Both parties draw batches from the same shuffle stream.
    pub shared_batch_order: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr: 1e-3,
            rounds: 200,
            seed: 0,
            mmd: MmdKind::Rbf,
            lambda: 1.0,
            grad_exchange: false,
            average_every: 1,
            shared_batch_order: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.average_every == 0 {
            return bad("average_every must be at least 1");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// Shuffle seed of party `party_id`.
    pub fn batch_seed(&self, party_id: u64) -> u64 {
        if self.shared_batch_order {
            self.seed
        } else {
            self.seed ^ party_id
        }
    }
}

/// Draws batches without replacement, reshuffling at each epoch boundary.
/// A tail shorter than a full batch is dropped.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            pos: 0,
            batch: batch.min(n).max(1),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let rows = &self.order[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        rows
    }
}

/// One party's mutable training state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub params: ParamSet,
    pub adam: AdamState,
    pub sampler: EpochSampler,
}

impl Learner {
    pub fn new(params: ParamSet, cfg: &TrainConfig, n_samples: usize, sampler_seed: u64) -> Self {
        let adam = AdamState::new(params.len(), cfg.adam());
        Self {
            params,
            adam,
            sampler: EpochSampler::new(n_samples, cfg.batch_size, sampler_seed),
        }
    }

    /// One Adam step on the local loss; returns the loss before the step.
    pub fn local_step(&mut self, net: &SofaNet, data: &EncodedSet) -> Result<f64, TrainError> {
        let batch = Batch::from_set(data, self.sampler.next_batch());
        let fwd = net.forward(&self.params, &batch.inputs)?;
        let loss = net.local_loss(&fwd, &batch.sepsis, &batch.sofa)?;
        let grads = net.backward(&self.params, &batch.inputs, &fwd, &loss, None)?;
        self.adam.step(&mut self.params, &grads.flatten())?;
        Ok(loss.total)
    }
}

/// Per-round training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalHistory {
    pub losses: Vec<f64>,
}

/// Trains from `init` on one party's data without any exchange.
pub fn train_local_from(
    net: &SofaNet,
    cfg: &TrainConfig,
    data: &EncodedSet,
    init: ParamSet,
    sampler_seed: u64,
) -> Result<(ParamSet, LocalHistory), TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let mut learner = Learner::new(init, cfg, data.len(), sampler_seed);
    let mut history = LocalHistory::default();
    for _ in 0..cfg.rounds {
        history.losses.push(learner.local_step(net, data)?);
    }
    Ok((learner.params, history))
}

/// Local training from the seeded initialization, party 0's batch stream.
pub fn train_local(
    net: &SofaNet,
    cfg: &TrainConfig,
    data: &EncodedSet,
) -> Result<(ParamSet, LocalHistory), TrainError> {
    train_local_from(net, cfg, data, net.init_params(cfg.seed), cfg.batch_seed(0))
}

/// Trains on `source`, then continues on `target` with a fresh optimizer.
pub fn finetune(
    net: &SofaNet,
    cfg: &TrainConfig,
    source: &EncodedSet,
    target: &EncodedSet,
) -> Result<(ParamSet, LocalHistory), TrainError> {
    let (pretrained, mut history) = train_local(net, cfg, source)?;
    let (params, tail) = train_local_from(net, cfg, target, pretrained, cfg.batch_seed(1))?;
    history.losses.extend(tail.losses);
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{windows_for_cohort, FeatureScaler};
    use crate::model::ModelConfig;
    use crate::synth::{generate_cohort, Profile};
    use std::collections::HashSet;

    fn toy_set(n: usize, seed: u64) -> EncodedSet {
        let c = generate_cohort(&Profile::MimicLike.config(n, seed)).unwrap();
        let w = windows_for_cohort(&c, &c.feature_means).unwrap();
        let filled: Vec<_> = c
            .patients
            .iter()
            .map(|p| crate::data::impute(p, &c.feature_means))
            .collect();
        EncodedSet::encode(&w, &FeatureScaler::fit(&filled, c.schema.len()))
    }

    fn tiny_net() -> SofaNet {
        SofaNet::new(ModelConfig {
            hidden_dim: 4,
            ..ModelConfig::new(27)
        })
        .unwrap()
    }

    #[test]
    fn sampler_covers_epoch_without_replacement() {
        let mut s = EpochSampler::new(10, 3, 1);
        let mut seen = HashSet::new();
        for _ in 0..3 {
            for &i in s.next_batch() {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 9);
        // tail of one dropped, new epoch starts
        assert_eq!(s.next_batch().len(), 3);
        assert_eq!(EpochSampler::new(2, 32, 0).next_batch().len(), 2);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig {
                batch_size: 1,
                ..ok
            },
            TrainConfig { rounds: 0, ..ok },
            TrainConfig { lr: 0.0, ..ok },
            TrainConfig { lambda: -1.0, ..ok },
            TrainConfig {
                average_every: 0,
                ..ok
            },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
        }
    }

    #[test]
    fn local_training_is_deterministic() {
        let data = toy_set(30, 1);
        let net = tiny_net();
        let cfg = TrainConfig {
            rounds: 5,
            ..TrainConfig::default()
        };
        let (a, ha) = train_local(&net, &cfg, &data).unwrap();
        let (b, hb) = train_local(&net, &cfg, &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let (c, _) = train_local(&net, &TrainConfig { seed: 1, ..cfg }, &data).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn finetune_on_same_data_is_two_stage_local() {
        let data = toy_set(20, 2);
        let net = tiny_net();
        let cfg = TrainConfig {
            rounds: 4,
            ..TrainConfig::default()
        };
        let (ft, h) = finetune(&net, &cfg, &data, &data).unwrap();
        assert_eq!(h.losses.len(), 8);
        let (first, _) = train_local(&net, &cfg, &data).unwrap();
        let (second, _) = train_local_from(&net, &cfg, &data, first, cfg.batch_seed(1)).unwrap();
        assert_eq!(ft, second);
    }

    #[test]
    fn empty_set_rejected() {
        let data = EncodedSet::encode(&[], &FeatureScaler::identity(27));
        assert_eq!(
            train_local(&tiny_net(), &TrainConfig::default(), &data).unwrap_err(),
            TrainError::EmptySet
        );
    }
}
