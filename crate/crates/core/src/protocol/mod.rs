//! Round-structured client and server engines, independent of transport.
//!
//! Each round the client encrypts its state vector in `N`-sized chunks
//! (with automorphism powers for `γ ≥ 1`); the server extracts one
//! ciphertext per value, undoes the previous round's shuffle, runs the
//! round's linear layers, shuffles the outputs (all rounds but the last)
//! and packs them; the client decrypts, applies the activation, and goes
//! again. Only the client ever holds the secret key.

mod audit;
mod client;
mod link;
mod metadata;
mod server;

pub use audit::{pack_noise_samples, session_noise};
pub use client::{ClientSession, FinalScores, RoundOutcome};
pub use link::{run_inference, DirectLink, InferenceReport, ServerLink, Traffic};
pub use metadata::{ModelMetadata, RoundMeta};
pub use server::{RoundStats, Server, ServerConfig};

use crate::crypto::{CryptoError, KeySwitchKeySet, RlweCiphertext};
use crate::model::ModelError;
use crate::params::FheParams;
use crate::trace_pack::{PackError, PowerBundle};

pub type SessionId = [u8; 16];

pub fn session_hex(sid: &SessionId) -> String {
    sid.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("setup refused: {0}")]
    SetupRefused(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("stale or mismatched round: expected {expected}, got {got}")]
    StaleRound { expected: u32, got: u32 },
    #[error("session already finished all {0} rounds")]
    SessionFinished(u32),
    #[error("malformed bundle: {0}")]
    MalformedBundle(String),
    #[error("expected {expected} ciphertexts, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("state vector has {got} values, round takes {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("client has no session yet")]
    NotSetUp,
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Client hello: parameters and the key-switching keys.
#[derive(Clone, Debug)]
pub struct SetupRequest {
    pub params: FheParams,
    pub keys: KeySwitchKeySet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetupResponse {
    pub session_id: SessionId,
    pub metadata: ModelMetadata,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRequest {
    pub session_id: SessionId,
    pub round: u32,
    pub bundles: Vec<PowerBundle>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundResponse {
    pub session_id: SessionId,
    pub round: u32,
    pub packed: Vec<RlweCiphertext>,
}

#[cfg(test)]
pub(crate) mod tests;
