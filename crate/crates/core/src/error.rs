use thiserror::Error;

use crate::confidentiality::DpError;
use crate::crypto::CryptoError;
use crate::model::ModelError;
use crate::protocol::ProtocolError;
use crate::ring::RingError;
use crate::trace_pack::PackError;
use crate::transport::WireError;

/// Crate-wide error; each layer has its own enum that converts into this one.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
