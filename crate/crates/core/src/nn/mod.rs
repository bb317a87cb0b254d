//! Small f64 numerical kernel with hand-derived gradients.
//!
//! Batched kernels take `n × d` row matrices; a single sample is a batch of
//! one.

mod adam;
pub mod gradcheck;
mod gru;
mod linear;
mod loss;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use gru::{
    gru_backward, gru_cell_forward, gru_forward_seq, GruCache, GruGrads, GruStep, GruWeights,
};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use loss::{softmax, softmax_cross_entropy, softmax_cross_entropy_batch};
pub use params::{
    decode_params, deserialize_params, param_average, serialize_params, CodecError, ParamSet,
    TensorBuffer,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

pub(crate) fn shape_err(what: impl Into<String>) -> NnError {
    NnError::ShapeMismatch(what.into())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
