//! Two-party collaborative training over a framed duplex channel.

mod audit;
mod frame;
mod party;
mod transport;

pub use audit::{
    privacy_audit, privacy_audit_bytes, AuditReport, Finding, RawWindowIndex, Violation,
};
pub use frame::{
    decode_matrix, decode_transcript, encode_matrix, encode_transcript, Direction, Frame,
    FrameError, Kind, TapRecord, HEADER_LEN, MAX_PAYLOAD,
};
pub use party::{
    default_hello, param_digest, run_party, train_collab, train_collab_with, CollabHistory, Hello,
    Party, PartyOutcome, Role, RoundRecord, PROTOCOL_VERSION,
};
pub use transport::{channel_pair, ChannelTransport, StreamTransport, Tap, Transport};

use thiserror::Error;

use crate::mmd::MmdError;
use crate::model::ModelError;
use crate::nn::CodecError;
use crate::train::TrainError;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("round desync: ours {ours}, peer {theirs}")]
    RoundDesync { ours: u32, theirs: u32 },
    #[error("expected {expected} frame, got {got}")]
    UnexpectedKind {
        expected: &'static str,
        got: &'static str,
    },
    #[error("HELLO mismatch: ours {ours:?}, peer {theirs:?}")]
    ConfigMismatch { ours: Hello, theirs: Hello },
    #[error("peer closed the connection")]
    PeerClosed,
    #[error("malformed payload: {0}")]
    BadPayload(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mmd(#[from] MmdError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
