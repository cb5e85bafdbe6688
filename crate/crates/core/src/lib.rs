//! Hybrid homomorphic inference over prime-power cyclotomic rings.
//!
//! A client holds an RLWE secret key and evaluates non-linear activations in
//! the clear; the server evaluates quantized linear layers on ciphertexts,
//! shuffles intermediate outputs and repacks them with a tower of partial
//! traces so the client never needs to bootstrap.
//!
//! Layering, bottom to top: [`ring`] (torus polynomials, automorphisms,
//! traces, dual basis), [`crypto`] (keys, encryption, key switching),
//! [`trace_pack`] (extraction, fast trace, packing), [`model`] (quantized
//! models and the encrypted linear evaluator), [`protocol`] (round engines),
//! [`confidentiality`] (permutations, DP bound, noise audit, attacks) and
//! [`transport`] (wire format, loopback and TCP).

pub mod bench;
pub mod confidentiality;
pub mod config;
pub mod crypto;
pub mod error;
pub mod model;
pub mod params;
pub mod protocol;
pub mod ring;
pub mod trace_pack;
pub mod transport;

pub use error::{Error, Result};
