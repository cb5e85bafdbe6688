//! LWE/RLWE encryption over the torus, gadget decomposition and key
//! switching for ring automorphisms.

mod ciphertext;
mod gadget;
mod keys;
mod keyswitch;
mod lwe;

use thiserror::Error;

use crate::ring::RingError;

pub use ciphertext::RlweCiphertext;
pub use gadget::GadgetParams;
pub use keys::{decrypt, encrypt, encrypt_with_parts, phase, GaussianSampler, KeyDistribution, SecretKey};
pub use keyswitch::{AutomorphismKey, KeySwitchKeySet, KeySwitcher};
pub use lwe::{LweCiphertext, LweSecretKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CryptoError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("gadget base {base} with {levels} levels is invalid (need base >= 2, levels >= 1, base^levels <= 2^53, base <= 2^16)")]
    Gadget { base: u64, levels: u32 },
    #[error("no key-switching key for automorphism index {0}")]
    MissingKey(usize),
    #[error("key set covers {got} automorphism indices, above the limit {limit}")]
    TooManyKeys { got: usize, limit: usize },
    #[error("operands belong to different rings")]
    ParamsMismatch,
    #[error("noise standard deviation {0} must be finite and non-negative")]
    BadNoise(f64),
    #[error("key material has wrong shape: {0}")]
    Shape(String),
}
