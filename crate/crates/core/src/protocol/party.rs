//! One party of the lockstep two-party training protocol.
//!
//! Round script, identical on both sides:
//! `HIDDEN_BATCH ⇄ [HIDDEN_GRAD ⇄] step [PARAMS ⇄ average]`.
//! Role A sends before receiving and role B receives before sending, so
//! neither side blocks on a full stream buffer.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::frame::{decode_matrix, encode_matrix, Frame, Kind};
use super::transport::{channel_pair, Transport};
use super::ProtocolError;
use crate::data::EncodedSet;
use crate::mmd::{mmd, mmd_backward, Estimator};
use crate::model::{Batch, SofaNet};
use crate::nn::{deserialize_params, param_average, serialize_params, ParamSet};
use crate::train::{Learner, TrainConfig};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    A,
    B,
}

impl Role {
    pub fn id(self) -> u64 {
        match self {
            Role::A => 0,
            Role::B => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "a" | "A" => Some(Role::A),
            "b" | "B" => Some(Role::B),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub schema_hash: String,
    pub config_hash: String,
    pub protocol_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub local_loss: f64,
    pub mmd: f64,
    /// sha256 of the serialized parameters at the end of the round.
    pub param_digest: String,
}

/// Per-round records of both parties.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollabHistory {
    pub a: Vec<RoundRecord>,
    pub b: Vec<RoundRecord>,
}

impl CollabHistory {
    pub fn mmd(&self) -> Vec<f64> {
        self.a.iter().map(|r| r.mmd).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MetricsPayload {
    role: Role,
    records: Vec<RoundRecord>,
}

pub fn param_digest(p: &ParamSet) -> String {
    hex::encode(Sha256::digest(serialize_params(p)))
}

pub struct Party<'a> {
    role: Role,
    net: &'a SofaNet,
    cfg: TrainConfig,
    data: &'a EncodedSet,
    learner: Learner,
    round: u32,
    records: Vec<RoundRecord>,
}

impl<'a> Party<'a> {
    /// Both parties start from the seeded initialization.
    pub fn new(
        role: Role,
        net: &'a SofaNet,
        cfg: TrainConfig,
        data: &'a EncodedSet,
    ) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(crate::train::TrainError::EmptySet.into());
        }
        let learner = Learner::new(
            net.init_params(cfg.seed),
            &cfg,
            data.len(),
            cfg.batch_seed(role.id()),
        );
        Ok(Self {
            role,
            net,
            cfg,
            data,
            learner,
            round: 0,
            records: Vec::new(),
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.learner.params
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    fn exchange<T: Transport>(&self, t: &mut T, out: Frame) -> Result<Frame, ProtocolError> {
        let kind = out.kind;
        let got = match self.role {
            Role::A => {
                t.send(&out)?;
                t.recv()?
            }
            Role::B => {
                let got = t.recv()?;
                t.send(&out)?;
                got
            }
        };
        if got.kind != kind {
            return Err(ProtocolError::UnexpectedKind {
                expected: kind.name(),
                got: got.kind.name(),
            });
        }
        if got.round != self.round {
            return Err(ProtocolError::RoundDesync {
                ours: self.round,
                theirs: got.round,
            });
        }
        Ok(got)
    }

    pub fn handshake<T: Transport>(
        &mut self,
        t: &mut T,
        hello: &Hello,
    ) -> Result<(), ProtocolError> {
        let payload = serde_json::to_vec(hello).expect("hello serializes");
        let got = self.exchange(t, Frame::new(Kind::Hello, 0, payload))?;
        let theirs: Hello = serde_json::from_slice(&got.payload)
            .map_err(|e| ProtocolError::BadPayload(format!("HELLO: {e}")))?;
        if &theirs != hello {
            return Err(ProtocolError::ConfigMismatch {
                ours: hello.clone(),
                theirs,
            });
        }
        Ok(())
    }

    /// Canonical (A, B) ordering of local and remote matrices.
    fn ordered<'m>(
        &self,
        local: &'m Array2<f64>,
        remote: &'m Array2<f64>,
    ) -> (&'m Array2<f64>, &'m Array2<f64>) {
        match self.role {
            Role::A => (local, remote),
            Role::B => (remote, local),
        }
    }

    pub fn run_round<T: Transport>(&mut self, t: &mut T) -> Result<&RoundRecord, ProtocolError> {
        self.round += 1;
        let net = self.net;
        let batch = Batch::from_set(self.data, self.learner.sampler.next_batch());
        let fwd = net.forward(&self.learner.params, &batch.inputs)?;
        let loss = net.local_loss(&fwd, &batch.sepsis, &batch.sofa)?;

        let got = self.exchange(
            t,
            Frame::new(Kind::HiddenBatch, self.round, encode_matrix(fwd.z.view())),
        )?;
        let z_remote = decode_matrix(&got.payload)?;
        if z_remote.ncols() != fwd.z.ncols() {
            return Err(ProtocolError::BadPayload(format!(
                "HIDDEN_BATCH width {} != {}",
                z_remote.ncols(),
                fwd.z.ncols()
            )));
        }
        let (za, zb) = self.ordered(&fwd.z, &z_remote);
        let est = Estimator::for_batches(self.cfg.mmd, za.view(), zb.view());
        let mmd_value = mmd(za.view(), zb.view(), &est)?;
        let (ga, gb) = mmd_backward(za.view(), zb.view(), &est)?;
        let (mut d_local, mut d_remote) = match self.role {
            Role::A => (ga, gb),
            Role::B => (gb, ga),
        };
        d_local *= self.cfg.lambda;
        d_remote *= self.cfg.lambda;

        if self.cfg.grad_exchange {
            let got = self.exchange(
                t,
                Frame::new(Kind::HiddenGrad, self.round, encode_matrix(d_remote.view())),
            )?;
            let from_peer = decode_matrix(&got.payload)?;
            if from_peer.dim() != d_local.dim() {
                return Err(ProtocolError::BadPayload("HIDDEN_GRAD shape".into()));
            }
            d_local += &from_peer;
        }

        let grads = net.backward(
            &self.learner.params,
            &batch.inputs,
            &fwd,
            &loss,
            Some(d_local.view()),
        )?;
        self.learner
            .adam
            .step(&mut self.learner.params, &grads.flatten())
            .map_err(crate::model::ModelError::from)?;

        if (self.round as usize).is_multiple_of(self.cfg.average_every) {
            let mine = serialize_params(&self.learner.params);
            let got = self.exchange(t, Frame::new(Kind::Params, self.round, mine))?;
            let theirs = deserialize_params(&got.payload, &self.learner.params)?;
            let (pa, pb) = match self.role {
                Role::A => (&self.learner.params, &theirs),
                Role::B => (&theirs, &self.learner.params),
            };
            self.learner.params = param_average(pa, pb)?;
        }

        self.records.push(RoundRecord {
            round: self.round,
            local_loss: loss.total,
            mmd: mmd_value,
            param_digest: param_digest(&self.learner.params),
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// METRICS and BYE exchange; returns the peer's round records.
    pub fn finish<T: Transport>(&mut self, t: &mut T) -> Result<Vec<RoundRecord>, ProtocolError> {
        let payload = serde_json::to_vec(&MetricsPayload {
            role: self.role,
            records: self.records.clone(),
        })
        .expect("metrics serialize");
        let got = self.exchange(t, Frame::new(Kind::Metrics, self.round, payload))?;
        let theirs: MetricsPayload = serde_json::from_slice(&got.payload)
            .map_err(|e| ProtocolError::BadPayload(format!("METRICS: {e}")))?;
        self.exchange(t, Frame::new(Kind::Bye, self.round, Vec::new()))?;
        Ok(theirs.records)
    }
}

/// Result of one party's complete run.
#[derive(Debug, Clone)]
pub struct PartyOutcome {
    pub params: ParamSet,
    pub own: Vec<RoundRecord>,
    pub peer: Vec<RoundRecord>,
}

impl PartyOutcome {
    pub fn history(&self, role: Role) -> CollabHistory {
        let (a, b) = match role {
            Role::A => (self.own.clone(), self.peer.clone()),
            Role::B => (self.peer.clone(), self.own.clone()),
        };
        CollabHistory { a, b }
    }
}

/// Handshake, `cfg.rounds` rounds, then METRICS/BYE.
pub fn run_party<T: Transport>(
    role: Role,
    net: &SofaNet,
    cfg: &TrainConfig,
    data: &EncodedSet,
    hello: &Hello,
    transport: &mut T,
) -> Result<PartyOutcome, ProtocolError> {
    let mut party = Party::new(role, net, *cfg, data)?;
    party.handshake(transport, hello)?;
    for _ in 0..cfg.rounds {
        let r = party.run_round(transport)?;
        log::debug!(
            "{role:?} round {} loss {:.4} mmd {:.4}",
            r.round,
            r.local_loss,
            r.mmd
        );
    }
    let peer = party.finish(transport)?;
    Ok(PartyOutcome {
        params: party.learner.params,
        own: party.records,
        peer,
    })
}

/// Hello used for in-process runs, derived from the training config.
pub fn default_hello(cfg: &TrainConfig, net: &SofaNet) -> Hello {
    let text = serde_json::to_string(&(cfg, net.config())).expect("config serializes");
    Hello {
        schema_hash: String::new(),
        config_hash: hex::encode(Sha256::digest(text.as_bytes())),
        protocol_version: PROTOCOL_VERSION,
    }
}

/// Runs both parties on threads connected by an in-process queue.
pub fn train_collab(
    net: &SofaNet,
    cfg: &TrainConfig,
    a: &EncodedSet,
    b: &EncodedSet,
) -> Result<(ParamSet, CollabHistory), ProtocolError> {
    let hello = default_hello(cfg, net);
    train_collab_with(net, cfg, a, b, &hello, channel_pair())
}

/// Runs both parties on threads over the given transport pair.
pub fn train_collab_with<T: Transport + Send>(
    net: &SofaNet,
    cfg: &TrainConfig,
    a: &EncodedSet,
    b: &EncodedSet,
    hello: &Hello,
    (mut ta, tb): (T, T),
) -> Result<(ParamSet, CollabHistory), ProtocolError> {
    let (ra, rb) = std::thread::scope(|s| {
        let hb = s.spawn(move || {
            let mut tb = tb;
            run_party(Role::B, net, cfg, b, hello, &mut tb)
        });
        let ra = run_party(Role::A, net, cfg, a, hello, &mut ta);
        // a failed party drops its end so the other unblocks with PeerClosed
        drop(ta);
        (ra, hb.join().expect("party B thread panicked"))
    });
    let ra = ra?;
    rb?;
    let history = ra.history(Role::A);
    Ok((ra.params, history))
}
