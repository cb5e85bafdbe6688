//! Quantized models: layer definitions, the on-disk format, the exact
//! integer forward pass and the encrypted linear evaluator.

mod encrypted;
mod format;
mod forward;
mod layers;
mod linear;
pub mod toy;
mod vectors;

use thiserror::Error;

pub use encrypted::{encrypted_linear, CtMatrix, EncryptedRound};
pub use format::{load_model, parse_model, save_model, Manifest, FORMAT_VERSION};
pub(crate) use forward::argmax;
pub use forward::{activation_apply, relu, requantize, softmax, Forward};
pub use layers::{
    ActivationKind, ActivationSpec, AvgPool, Conv2d, FullyConnected, Layer, QuantModel, Round, RoundGeometry, Shape,
};
pub use linear::{LoweredLayer, SparseLinear};
pub use vectors::{read_vectors, write_vectors, TestVector};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("weights blob: {0}")]
    Blob(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("weight {value} outside the signed {bits}-bit range in {layer}")]
    WeightRange { layer: String, value: i64, bits: u32 },
    #[error("round {round}, layer {layer}: worst-case value {value} exceeds the {bits}-bit accumulator")]
    AccumulatorBound { round: usize, layer: usize, value: i64, bits: u32 },
    #[error("accumulator overflow at round {round}, layer {layer}: {value}")]
    Overflow { round: usize, layer: usize, value: i64 },
    #[error("input value {value} at index {index} outside [{lo}, {hi}]")]
    InputRange { index: usize, value: i64, lo: i64, hi: i64 },
    #[error("invalid activation: {0}")]
    Activation(String),
    #[error("vectors file: {0}")]
    Vectors(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
